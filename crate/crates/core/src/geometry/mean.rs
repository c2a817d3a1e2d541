use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::rng::{streams, RngStream};
use crate::treespace::Tree;

use super::gtp::geodesic_point;
use super::{tree_distance_with, TreeMetric};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassOrder {
    #[default]
    Cyclic,
    Random,
}

#[derive(Clone, Debug)]
pub struct MeanConfig {
    /// Step cap; `None` means `5000 * trees.len()`.
    pub max_iterations: Option<usize>,
    pub pass_order: PassOrder,
    /// Stop when two successive pass-end iterates are closer than this.
    pub tolerance: f64,
    pub metric: TreeMetric,
    pub rng: RngStream,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self {
            max_iterations: None,
            pass_order: PassOrder::Cyclic,
            tolerance: 1e-8,
            metric: TreeMetric::Sum,
            rng: RngStream::new(0, streams::MEAN),
        }
    }
}

/// Frechet mean by inductive geodesic averaging: starting from the first
/// tree, step `k` moves a fraction `1 / (k + 1)` of the way toward the next
/// selected tree. Convergence is checked once per pass of `n` steps.
pub fn frechet_mean(trees: &[Tree], cfg: &MeanConfig) -> Result<Tree> {
    let first = trees.first().ok_or_else(|| invalid("Frechet mean of an empty list"))?;
    for t in trees {
        check_dim(first.p(), t.p())?;
    }
    let n = trees.len();
    let max_iter = cfg.max_iterations.unwrap_or(5000 * n);
    if max_iter == 0 {
        return Err(invalid("max_iterations must be at least 1"));
    }
    if n == 1 {
        return Ok(first.clone());
    }
    let mut rng = cfg.rng.clone();
    let mut x = first.clone();
    let mut pass_start = x.clone();
    for k in 1..=max_iter {
        let target = match cfg.pass_order {
            PassOrder::Cyclic => &trees[k % n],
            PassOrder::Random => &trees[rng.index(n)],
        };
        x = geodesic_point(&x, target, 1.0 / (k as f64 + 1.0))?;
        if k % n == n - 1 {
            // `k + 1` trees have been absorbed, a whole number of passes.
            let moved = tree_distance_with(&pass_start, &x, cfg.metric)?;
            if k + 1 > n && moved < cfg.tolerance {
                break;
            }
            pass_start = x.clone();
        }
    }
    Ok(x)
}
