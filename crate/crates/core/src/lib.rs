//! Bayesian inference over positive definite ultrametric covariance
//! matrices, parameterized by rooted leaf-labeled trees.
//!
//! A `p x p` strictly ultrametric matrix corresponds to exactly one tree on
//! leaves `0..=p` (leaf `0` hangs from the root): entry `(i, j)` is the path
//! length from the root leaf to the most recent common ancestor of `i` and
//! `j`. The crate provides that bijection, the tree-space geometry, priors
//! over topologies, the Gaussian likelihood, MH and HMC samplers, posterior
//! summaries and a simulation harness.

pub mod error;
pub mod geometry;
pub mod io;
pub mod model;
pub mod posterior;
pub mod priors;
pub mod rng;
pub mod samplers;
pub mod sim;
pub mod stats;
pub mod treespace;
pub mod ultrametric;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use treespace::{Coord, Split, Topology, Tree};
pub use ultrametric::{matrix_to_tree, tree_to_matrix, UltrametricMatrix};
