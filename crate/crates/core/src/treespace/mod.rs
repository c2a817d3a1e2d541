//! Rooted leaf-labeled trees: splits, topologies, trees, random generation
//! and Newick text.

pub mod newick;
pub mod random;
pub mod split;
pub mod topology;
pub mod tree;

pub use newick::{parse_newick, to_newick};
pub use random::{collapse_shortest, collapse_uniform, random_tree, RandomTreeMode};
pub use split::{set_compatible, split_compatible, Split, MAX_LEAVES};
pub use topology::{
    enumerate_all_topologies, enumerate_topologies, resolution_candidates, Fragmentation, Topology,
};
pub use tree::{Coord, Tree};
