use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Result};
use crate::priors::sample_beta_splitting;
use crate::rng::RngStream;

use super::split::Split;
use super::tree::Tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomTreeMode {
    /// Resolved topology uniform over all resolved topologies, i.i.d.
    /// exponential lengths.
    UniformBinary,
    /// Coalescent-style resolved tree with every leaf at the same depth.
    Equidistant,
}

fn exp_draw(mean: f64, rng: &mut RngStream) -> f64 {
    // Exponential draws are a.s. positive; guard the measure-zero case.
    let e = Exp::new(1.0 / mean).expect("positive rate");
    loop {
        let x = e.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

pub fn random_tree(p: usize, mode: RandomTreeMode, length_mean: f64, rng: &mut RngStream) -> Result<Tree> {
    if p < 2 {
        return Err(invalid(format!("random trees need p >= 2, got {p}")));
    }
    if !(length_mean > 0.0 && length_mean.is_finite()) {
        return Err(invalid("length mean must be positive"));
    }
    match mode {
        RandomTreeMode::UniformBinary => {
            let topo = sample_beta_splitting(p, -1.5, rng)?;
            let internal: BTreeMap<Split, f64> = topo
                .splits()
                .iter()
                .map(|s| (*s, exp_draw(length_mean, rng)))
                .collect();
            let leaves = (0..p).map(|_| exp_draw(length_mean, rng)).collect();
            let root = exp_draw(length_mean, rng);
            Ok(Tree::from_parts_unchecked(p, internal, leaves, root))
        }
        RandomTreeMode::Equidistant => coalescent(p, length_mean, rng),
    }
}

fn coalescent(p: usize, mean: f64, rng: &mut RngStream) -> Result<Tree> {
    // Lineages carry (leaf mask, node height); leaves start at height 0.
    let mut lineages: Vec<(u64, f64)> = (0..p).map(|i| (1u64 << i, 0.0)).collect();
    let mut internal = BTreeMap::new();
    let mut leaves = vec![0.0; p];
    let mut t = 0.0;
    while lineages.len() > 1 {
        let k = lineages.len() as f64;
        t += exp_draw(mean / (k * (k - 1.0) / 2.0), rng);
        lineages.shuffle(rng);
        let a = lineages.pop().expect("two lineages");
        let b = lineages.pop().expect("two lineages");
        for (mask, h) in [a, b] {
            let len = t - h;
            if len <= 0.0 {
                return Err(invalid("degenerate coalescent draw"));
            }
            if mask.count_ones() == 1 {
                leaves[mask.trailing_zeros() as usize] = len;
            } else {
                internal.insert(Split::new_unchecked(mask, p), len);
            }
        }
        lineages.push((a.0 | b.0, t));
    }
    let root = exp_draw(mean, rng);
    Ok(Tree::from_parts_unchecked(p, internal, leaves, root))
}

/// Removes `m` internal splits chosen uniformly at random.
pub fn collapse_uniform(t: &Tree, m: usize, rng: &mut RngStream) -> Result<Tree> {
    let mut splits: Vec<Split> = t.splits().copied().collect();
    if m > splits.len() {
        return Err(invalid(format!("cannot drop {m} of {} internal splits", splits.len())));
    }
    splits.shuffle(rng);
    Ok(t.without_splits(&splits[..m]))
}

/// Removes the `m` shortest internal splits (ties by canonical order).
pub fn collapse_shortest(t: &Tree, m: usize) -> Result<Tree> {
    let mut splits: Vec<(Split, f64)> = t.internal().iter().map(|(s, v)| (*s, *v)).collect();
    if m > splits.len() {
        return Err(invalid(format!("cannot drop {m} of {} internal splits", splits.len())));
    }
    splits.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let drop: Vec<Split> = splits[..m].iter().map(|x| x.0).collect();
    Ok(t.without_splits(&drop))
}
