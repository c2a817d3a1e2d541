//! Topology priors built from recursive fragmentation of the leaf set, and
//! the exponential edge-length prior.
//!
//! Every node of a rooted topology fragments its leaf block into the blocks
//! of its children. The beta-splitting prior is defined on binary
//! fragmentations only; the Poisson-Dirichlet prior allows any number of
//! children and is conditioned per node on producing at least two.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::treespace::split::full_mask;
use crate::treespace::{Split, Topology, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyPrior {
    BetaSplitting { beta: f64 },
    PoissonDirichlet { theta: f64, alpha_pd: f64 },
}

impl Default for TopologyPrior {
    fn default() -> Self {
        TopologyPrior::BetaSplitting { beta: -1.5 }
    }
}

impl TopologyPrior {
    pub fn default_pd() -> Self {
        TopologyPrior::PoissonDirichlet {
            theta: 1.0,
            alpha_pd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TopologyPrior::BetaSplitting { beta } => check_beta(beta),
            TopologyPrior::PoissonDirichlet { theta, alpha_pd } => check_pd(theta, alpha_pd),
        }
    }

    pub fn log_prior(&self, topology: &Topology) -> Result<f64> {
        match *self {
            TopologyPrior::BetaSplitting { beta } => beta_split_log_prior(topology, beta),
            TopologyPrior::PoissonDirichlet { theta, alpha_pd } => pd_log_prior(topology, theta, alpha_pd),
        }
    }

    pub fn sample(&self, p: usize, rng: &mut RngStream) -> Result<Topology> {
        match *self {
            TopologyPrior::BetaSplitting { beta } => sample_beta_splitting(p, beta, rng),
            TopologyPrior::PoissonDirichlet { theta, alpha_pd } => sample_pd(p, theta, alpha_pd, rng),
        }
    }
}

/// Topology prior together with the common mean of the exponential
/// edge-length prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub topology: TopologyPrior,
    pub edge_mean: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            topology: TopologyPrior::default(),
            edge_mean: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if !(self.edge_mean > 0.0 && self.edge_mean.is_finite()) {
            return Err(invalid(format!("edge mean must be positive, got {}", self.edge_mean)));
        }
        Ok(())
    }

    pub fn log_prior(&self, t: &Tree) -> Result<f64> {
        Ok(self.topology.log_prior(&t.topology())? + edge_length_log_prior(t, self.edge_mean))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta <= -2.0 {
        return Err(invalid(format!("beta must lie in (-2, inf), got {beta}")));
    }
    if beta.is_infinite() {
        return Err(invalid("beta = inf (comb limit) is not supported"));
    }
    Ok(())
}

fn check_pd(theta: f64, alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha_pd must lie in [0, 1), got {alpha}")));
    }
    if !(theta > -2.0 * alpha) || !theta.is_finite() {
        return Err(invalid(format!("theta must exceed -2 * alpha_pd, got {theta}")));
    }
    if theta == -alpha {
        return Err(invalid("theta = -alpha_pd gives a degenerate splitting law"));
    }
    Ok(())
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Unnormalized log weight of one labeled binary split of a block into
/// sizes `a` and `n - a`.
fn beta_weight(a: usize, n: usize, beta: f64) -> f64 {
    ln_gamma(a as f64 + beta + 1.0) + ln_gamma((n - a) as f64 + beta + 1.0)
        - ln_gamma(n as f64 + 2.0 * beta + 2.0)
}

/// Log of the sum of the weight over all unordered binary splits of a
/// block of size `n`, memoized per `(n, beta)`.
fn beta_log_normalizer(n: usize, beta: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, beta.to_bits());
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return *v;
    }
    let terms: Vec<f64> = (1..n).map(|a| ln_choose(n, a) + beta_weight(a, n, beta)).collect();
    // Each unordered split appears twice among labeled subsets.
    let z = log_sum_exp(&terms) - std::f64::consts::LN_2;
    cache.lock().expect("cache lock").insert(key, z);
    z
}

pub fn beta_split_log_prior(topology: &Topology, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !topology.is_resolved() {
        return Err(invalid("the beta-splitting prior needs a resolved topology"));
    }
    let mut total = 0.0;
    for node in topology.fragmentations() {
        let n = node.block.len();
        if n < 2 {
            continue;
        }
        let a = node.children[0].len();
        total += beta_weight(a, n, beta) - beta_log_normalizer(n, beta);
    }
    Ok(total)
}

/// `(x)_k = x (x+1) ... (x+k-1)` in plain floating point so signs survive.
fn rising(x: f64, k: usize) -> f64 {
    (0..k).map(|i| x + i as f64).product()
}

/// Probability that a block of size `n` fragments into one particular
/// labeled partition with block sizes `sizes` (k >= 2).
pub fn pd_split_probability(sizes: &[usize], theta: f64, alpha: f64) -> f64 {
    let n: usize = sizes.iter().sum();
    let k = sizes.len();
    let mut num: f64 = (1..k).map(|i| theta + i as f64 * alpha).product();
    for &nj in sizes {
        num *= rising(1.0 - alpha, nj - 1);
    }
    let denom = rising(theta + 1.0, n - 1) - rising(1.0 - alpha, n - 1);
    num / denom
}

pub fn pd_log_prior(topology: &Topology, theta: f64, alpha_pd: f64) -> Result<f64> {
    check_pd(theta, alpha_pd)?;
    let mut total = 0.0;
    for node in topology.fragmentations() {
        if node.block.len() < 2 {
            continue;
        }
        let sizes: Vec<usize> = node.children.iter().map(|c| c.len()).collect();
        total += pd_split_probability(&sizes, theta, alpha_pd).ln();
    }
    Ok(total)
}

/// Exponential log density with mean `a` summed over the root, leaf and
/// internal coordinates.
pub fn edge_length_log_prior(t: &Tree, a: f64) -> f64 {
    let q = t.num_coords() as f64;
    let sum = t.root_length() + t.leaf_lengths().iter().sum::<f64>() + t.internal().values().sum::<f64>();
    -q * a.ln() - sum / a
}

fn check_p(p: usize) -> Result<()> {
    if !(2..=crate::treespace::MAX_LEAVES).contains(&p) {
        return Err(invalid(format!("topology sampling needs 2 <= p <= 64, got {p}")));
    }
    Ok(())
}

fn draw_categorical(log_w: &[f64], rng: &mut RngStream) -> usize {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.uniform() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

fn mask_members(mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut rest = mask;
    while rest != 0 {
        let bit = rest & rest.wrapping_neg();
        out.push(bit);
        rest &= !bit;
    }
    out
}

pub fn sample_beta_splitting(p: usize, beta: f64, rng: &mut RngStream) -> Result<Topology> {
    check_p(p)?;
    check_beta(beta)?;
    let mut splits = Vec::new();
    let mut stack = vec![full_mask(p)];
    while let Some(block) = stack.pop() {
        let mut members = mask_members(block);
        let n = members.len();
        if n < 2 {
            continue;
        }
        let log_w: Vec<f64> = (1..n).map(|a| ln_choose(n, a) + beta_weight(a, n, beta)).collect();
        let a = draw_categorical(&log_w, rng) + 1;
        members.shuffle(rng);
        let left = members[..a].iter().fold(0u64, |acc, b| acc | b);
        let right = block & !left;
        for part in [left, right] {
            if part.count_ones() >= 2 {
                splits.push(Split::new_unchecked(part, p));
            }
            stack.push(part);
        }
    }
    Topology::new(p, splits)
}

pub fn sample_pd(p: usize, theta: f64, alpha_pd: f64, rng: &mut RngStream) -> Result<Topology> {
    check_p(p)?;
    check_pd(theta, alpha_pd)?;
    if theta <= -alpha_pd {
        return Err(invalid(
            "sampling the Poisson-Dirichlet prior needs theta > -alpha_pd",
        ));
    }
    let mut splits = Vec::new();
    let mut stack = vec![full_mask(p)];
    while let Some(block) = stack.pop() {
        let members = mask_members(block);
        let n = members.len();
        if n < 2 {
            continue;
        }
        let parts = loop {
            let tables = chinese_restaurant(n, theta, alpha_pd, rng);
            if tables.len() >= 2 {
                break tables;
            }
        };
        for table in parts {
            let mask = table.iter().fold(0u64, |acc, &i| acc | members[i]);
            if table.len() >= 2 {
                splits.push(Split::new_unchecked(mask, p));
            }
            stack.push(mask);
        }
    }
    Topology::new(p, splits)
}

fn chinese_restaurant(n: usize, theta: f64, alpha: f64, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut tables: Vec<Vec<usize>> = vec![vec![0]];
    for m in 1..n {
        let k = tables.len() as f64;
        let mut log_w: Vec<f64> = tables
            .iter()
            .map(|t| (t.len() as f64 - alpha).ln())
            .collect();
        log_w.push((theta + k * alpha).ln());
        let c = draw_categorical(&log_w, rng);
        if c == tables.len() {
            tables.push(vec![m]);
        } else {
            tables[c].push(m);
        }
    }
    tables
}
