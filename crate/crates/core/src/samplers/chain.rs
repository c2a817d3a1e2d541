use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Result};
use crate::model::SufficientStats;
use crate::posterior::{PosteriorArchive, Provenance, Record, TracePoint};
use crate::priors::PriorSpec;
use crate::rng::{streams, RngStream};
use crate::treespace::{random_tree, RandomTreeMode, Tree};

use super::hmc::{hmc_step, HmcConfig, PosteriorPotential};
use super::mh::{mh_iteration, ChainState, MhConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum SamplerConfig {
    Mh(MhConfig),
    Hmc(HmcConfig),
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerConfig::Mh(c) => c.validate(),
            SamplerConfig::Hmc(c) => c.validate(),
        }
    }

    pub fn algo(&self) -> &'static str {
        match self {
            SamplerConfig::Mh(_) => "mh",
            SamplerConfig::Hmc(_) => "hmc",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SamplerConfig::Mh(c) => c.seed,
            SamplerConfig::Hmc(c) => c.seed,
        }
    }

    pub fn prior(&self) -> &PriorSpec {
        match self {
            SamplerConfig::Mh(c) => &c.prior,
            SamplerConfig::Hmc(c) => &c.prior,
        }
    }

    fn schedule(&self) -> (usize, usize, usize) {
        match self {
            SamplerConfig::Mh(c) => (c.iterations, c.burn_in, c.thin),
            SamplerConfig::Hmc(c) => (c.iterations, c.burn_in, c.thin),
        }
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Default starting tree: uniform resolved topology with unit-mean lengths,
/// drawn from the run seed.
pub fn default_init(p: usize, seed: u64, chain: u64) -> Result<Tree> {
    let mut rng = RngStream::new(seed, streams::INIT_TREE + chain);
    random_tree(p, RandomTreeMode::UniformBinary, 1.0, &mut rng)
}

/// Runs one chain from `init`. Chain `k` draws from stream `CHAIN + k` of
/// the configured seed, so chains sharing a seed stay independent.
pub fn run_chain(stats: &SufficientStats, init: Tree, cfg: &SamplerConfig, chain: u64) -> Result<PosteriorArchive> {
    cfg.validate()?;
    check_dim(stats.p(), init.p())?;
    init.check_invariants()?;
    let mut rng = RngStream::new(cfg.seed(), streams::CHAIN + chain);
    let (iterations, burn_in, thin) = cfg.schedule();
    let mut archive = PosteriorArchive::new(
        init.p(),
        Provenance {
            algo: cfg.algo().to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed(),
        },
    );
    archive.trace.reserve(iterations);
    let prior = *cfg.prior();
    let mut state = ChainState::new(init, stats, &prior)?;
    let potential = PosteriorPotential { stats, prior };
    for iter in 0..iterations {
        match cfg {
            SamplerConfig::Mh(c) => mh_iteration(&mut state, stats, c, &mut rng)?,
            SamplerConfig::Hmc(c) => {
                let u0 = -(state.log_prior + state.log_lik);
                let (tree, u1, out) = hmc_step(&state.tree, u0, &potential, c, &mut rng)?;
                state.acceptance.length_proposed += 1;
                if out.divergent {
                    state.acceptance.divergent += 1;
                }
                if out.accepted {
                    state.acceptance.length_accepted += 1;
                    if tree.topology() != state.tree.topology() {
                        state.acceptance.topology_accepted += 1;
                    }
                    state.log_prior = prior.log_prior(&tree)?;
                    state.log_lik = -u1 - state.log_prior;
                    state.tree = tree;
                }
                state.iteration += 1;
            }
        }
        if cfg!(debug_assertions) && iter % 256 == 0 {
            let err = state.cache_error(stats, &prior)?;
            debug_assert!(err < 1e-6 * (1.0 + state.log_lik.abs()), "cached log density drifted by {err}");
        }
        archive.trace.push(TracePoint {
            iter,
            log_lik: state.log_lik,
        });
        if iter >= burn_in && (iter - burn_in) % thin == 0 {
            archive.records.push(Record {
                iter,
                log_prior: state.log_prior,
                log_lik: state.log_lik,
                tree: state.tree.clone(),
            });
        }
    }
    archive.acceptance = state.acceptance;
    Ok(archive)
}

/// Resolved starting tree fitted to the sample covariance `S / n` by
/// average-linkage agglomeration: the two clusters with the largest mean
/// cross-covariance merge at that covariance. Lengths are floored at a
/// small positive value so the result is a valid interior point.
pub fn data_init(stats: &SufficientStats) -> Result<Tree> {
    let p = stats.p();
    if stats.n() == 0 {
        return Err(crate::error::invalid("a data-driven start needs observations"));
    }
    let c = stats.scatter() / stats.n() as f64;
    let scale = (0..p).map(|i| c[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = 1e-3 * scale;
    // (mask, merge height); leaves start at their own variance.
    let mut clusters: Vec<(u64, f64)> = (0..p).map(|i| (1u64 << i, c[(i, i)])).collect();
    let mut internal = std::collections::BTreeMap::new();
    let mut leaf_parent = vec![0.0; p];
    let cross = |a: u64, b: u64| {
        let (mut s, mut k) = (0.0, 0usize);
        for i in 0..p {
            for j in 0..p {
                if a >> i & 1 == 1 && b >> j & 1 == 1 {
                    s += c[(i, j)];
                    k += 1;
                }
            }
        }
        s / k as f64
    };
    let mut root_height = c[(0, 0)];
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let v = cross(clusters[a].0, clusters[b].0);
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
        let (a, b, v) = best;
        let (mb, hb) = clusters.remove(b);
        let (ma, ha) = clusters.remove(a);
        // Keep heights monotone even when averages are not.
        let h = v.min(ha).min(hb);
        for (m, hm) in [(ma, ha), (mb, hb)] {
            if m.count_ones() == 1 {
                leaf_parent[m.trailing_zeros() as usize] = h;
            } else {
                internal.insert(crate::treespace::Split::from_mask(m, p)?, (hm - h).max(floor));
            }
        }
        clusters.push((ma | mb, h));
        root_height = h;
    }
    let leaves: Vec<f64> = (0..p).map(|i| (c[(i, i)] - leaf_parent[i]).max(floor)).collect();
    let root = if p == 1 { c[(0, 0)].max(floor) } else { root_height.max(0.0) };
    let leaves = if p == 1 { vec![c[(0, 0)].max(floor) / 2.0] } else { leaves };
    Tree::new(p, internal, leaves, if p == 1 { root / 2.0 } else { root })
}
