//! Metropolis-Hastings over trees: a nearest-neighbour topology move that
//! carries the removed edge length onto the new split, followed by a
//! single-site truncated-normal sweep over every stored length.

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{tree_loglik, SufficientStats};
use crate::posterior::Acceptance;
use crate::priors::{PriorSpec, TopologyPrior};
use crate::rng::RngStream;
use crate::stats::log_norm_cdf;
use crate::treespace::{resolution_candidates, Coord, Tree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MhMode {
    /// Swap one internal split for one of its two alternatives.
    #[default]
    Binary,
    /// Swap for any alternative, or drop the split.
    Multifurcating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MhConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Standard deviation of the truncated-normal length proposal.
    pub sigma_l: f64,
    pub mode: MhMode,
    pub prior: PriorSpec,
    pub seed: u64,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 9_000,
            sigma_l: 0.1,
            mode: MhMode::Binary,
            prior: PriorSpec::default(),
            seed: 0,
            thin: 1,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(invalid(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if !(self.sigma_l > 0.0 && self.sigma_l.is_finite()) {
            return Err(invalid(format!("sigma_L must be positive, got {}", self.sigma_l)));
        }
        if self.thin == 0 {
            return Err(invalid("thin must be at least 1"));
        }
        self.prior.validate()?;
        if self.mode == MhMode::Multifurcating {
            if let TopologyPrior::BetaSplitting { .. } = self.prior.topology {
                return Err(invalid(
                    "the multifurcating sampler needs a prior on unresolved topologies (poisson-dirichlet)",
                ));
            }
        }
        Ok(())
    }
}

/// Current tree with cached log densities and acceptance counters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub tree: Tree,
    pub log_prior: f64,
    pub log_lik: f64,
    pub iteration: usize,
    pub acceptance: Acceptance,
}

impl ChainState {
    pub fn new(tree: Tree, stats: &SufficientStats, prior: &PriorSpec) -> Result<Self> {
        let log_prior = prior.log_prior(&tree)?;
        let log_lik = tree_loglik(stats, &tree)?;
        Ok(Self {
            tree,
            log_prior,
            log_lik,
            iteration: 0,
            acceptance: Acceptance::default(),
        })
    }

    /// Recomputes the cached densities and reports the larger discrepancy.
    pub fn cache_error(&self, stats: &SufficientStats, prior: &PriorSpec) -> Result<f64> {
        let lp = prior.log_prior(&self.tree)?;
        let ll = tree_loglik(stats, &self.tree)?;
        Ok((lp - self.log_prior).abs().max((ll - self.log_lik).abs()))
    }
}

pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.min(0.0).exp()
    }
}

fn accept(log_ratio: f64, rng: &mut RngStream) -> bool {
    log_ratio >= 0.0 || rng.uniform() < acceptance_probability(log_ratio)
}

/// Log acceptance ratio of moving one length from `current` to `proposed`
/// under an exponential prior with mean `edge_mean` and a truncated-normal
/// proposal with standard deviation `sigma`; `dll` is the log-likelihood
/// change. The Gaussian kernels cancel, leaving the ratio of the truncation
/// constants.
pub fn length_log_ratio(current: f64, proposed: f64, dll: f64, edge_mean: f64, sigma: f64) -> f64 {
    dll - (proposed - current) / edge_mean + log_norm_cdf(current / sigma) - log_norm_cdf(proposed / sigma)
}

/// Draw from `N(mean, sd^2)` truncated to `(0, inf)`; `mean > 0`, so plain
/// rejection accepts at least half of the time.
pub fn sample_truncated_normal(mean: f64, sd: f64, rng: &mut RngStream) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + sd * z;
        if x > 0.0 {
            return x;
        }
    }
}

/// One topology proposal. Returns whether it was accepted.
pub fn mh_topology_update(
    state: &mut ChainState,
    stats: &SufficientStats,
    cfg: &MhConfig,
    rng: &mut RngStream,
) -> Result<bool> {
    if cfg.mode == MhMode::Binary && !state.tree.is_resolved() {
        return Err(invalid("the binary sampler requires a resolved tree"));
    }
    let splits: Vec<_> = state.tree.splits().copied().collect();
    if splits.is_empty() {
        return Ok(false);
    }
    let removed = splits[rng.index(splits.len())];
    let len = state.tree.get(Coord::Internal(removed));
    let candidates = resolution_candidates(&state.tree.topology(), &removed)?;
    let alternatives = &candidates[1..];
    let options = match cfg.mode {
        MhMode::Binary => alternatives.len(),
        MhMode::Multifurcating => alternatives.len() + 1,
    };
    if options == 0 {
        return Ok(false);
    }
    let pick = rng.index(options);
    let mut proposal = state.tree.clone();
    if pick < alternatives.len() {
        proposal.swap_split(&removed, alternatives[pick], len);
    } else {
        proposal.remove_split(&removed);
    }
    state.acceptance.topology_proposed += 1;
    let topo_old = cfg.prior.topology.log_prior(&state.tree.topology())?;
    let topo_new = cfg.prior.topology.log_prior(&proposal.topology())?;
    let log_lik = match tree_loglik(stats, &proposal) {
        Ok(v) => v,
        Err(crate::Error::NotPositiveDefinite) => return Ok(false),
        Err(e) => return Err(e),
    };
    let log_ratio = (topo_new - topo_old) + (log_lik - state.log_lik);
    if accept(log_ratio, rng) {
        state.log_prior = cfg.prior.log_prior(&proposal)?;
        state.log_lik = log_lik;
        state.tree = proposal;
        state.acceptance.topology_accepted += 1;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Single-site sweep over every stored length in canonical order. Returns
/// the number of accepted moves.
pub fn mh_length_update(
    state: &mut ChainState,
    stats: &SufficientStats,
    cfg: &MhConfig,
    rng: &mut RngStream,
) -> Result<usize> {
    let mut accepted = 0;
    let a = cfg.prior.edge_mean;
    for c in state.tree.coords() {
        let current = state.tree.get(c);
        let proposed = sample_truncated_normal(current, cfg.sigma_l, rng);
        let mut candidate = state.tree.clone();
        candidate.set_unchecked(c, proposed);
        state.acceptance.length_proposed += 1;
        let log_lik = match tree_loglik(stats, &candidate) {
            Ok(v) => v,
            Err(crate::Error::NotPositiveDefinite) => continue,
            Err(e) => return Err(e),
        };
        let log_ratio = length_log_ratio(current, proposed, log_lik - state.log_lik, a, cfg.sigma_l);
        if accept(log_ratio, rng) {
            state.log_prior -= (proposed - current) / a;
            state.log_lik = log_lik;
            state.tree = candidate;
            state.acceptance.length_accepted += 1;
            accepted += 1;
        }
    }
    Ok(accepted)
}

/// Topology move followed by a length sweep.
pub fn mh_iteration(state: &mut ChainState, stats: &SufficientStats, cfg: &MhConfig, rng: &mut RngStream) -> Result<()> {
    mh_topology_update(state, stats, cfg, rng)?;
    mh_length_update(state, stats, cfg, rng)?;
    state.iteration += 1;
    Ok(())
}
