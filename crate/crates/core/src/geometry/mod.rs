//! Distances, geodesics and Frechet means on extended tree space, and the
//! matrix metric pulled back through the tree bijection.

pub mod flow;
pub mod gtp;
pub mod mean;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::treespace::Tree;
use crate::ultrametric::matrix_to_tree;

pub use gtp::{bhv_distance, geodesic_point, geodesic_support, CommonSplit, GeodesicSupport, SupportPair};
pub use mean::{frechet_mean, MeanConfig, PassOrder};

/// How the internal-edge distance combines with the leaf/root term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeMetric {
    /// `d_bhv + |x - y|`.
    #[default]
    Sum,
    /// `sqrt(d_bhv^2 + |x - y|^2)`, the product metric.
    L2,
}

/// Euclidean norm of the difference of the root and leaf coordinates.
pub fn leaf_term(t1: &Tree, t2: &Tree) -> Result<f64> {
    check_dim(t1.p(), t2.p())?;
    let r = t1.root_length() - t2.root_length();
    let l: f64 = t1
        .leaf_lengths()
        .iter()
        .zip(t2.leaf_lengths())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((r * r + l).sqrt())
}

pub fn combine(metric: TreeMetric, d_bhv: f64, leaf: f64) -> f64 {
    match metric {
        TreeMetric::Sum => d_bhv + leaf,
        TreeMetric::L2 => d_bhv.hypot(leaf),
    }
}

pub fn tree_distance(t1: &Tree, t2: &Tree) -> Result<f64> {
    tree_distance_with(t1, t2, TreeMetric::Sum)
}

pub fn tree_distance_with(t1: &Tree, t2: &Tree, metric: TreeMetric) -> Result<f64> {
    let (d, _) = bhv_distance(t1, t2)?;
    Ok(combine(metric, d, leaf_term(t1, t2)?))
}

/// Tree distance between the trees of two ultrametric matrices.
pub fn matrix_distance(m1: &DMatrix<f64>, m2: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let t1 = matrix_to_tree(m1, tol)?;
    let t2 = matrix_to_tree(m2, tol)?;
    tree_distance(&t1, &t2)
}
