//! Replicated simulation studies: draw a true tree, generate data, run a
//! sampler and score the posterior against the truth.

use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{matrix_distance, MeanConfig, PassOrder, TreeMetric};
use crate::model::{sample_data, suff_stats, tree_loglik, Distribution, SufficientStats};
use crate::posterior::{coverage, credible_intervals, map_sample, posterior_mean_tree, split_frequency, trace_stats};
use crate::rng::{streams, RngStream};
use crate::samplers::{default_init, run_chain, SamplerConfig};
use crate::stats::{median, variance};
use crate::treespace::{collapse_shortest, collapse_uniform, random_tree, RandomTreeMode, Split, Tree};
use crate::ultrametric::{tree_to_matrix, UltrametricMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFamily {
    Normal,
    T3,
    T4,
}

impl DataFamily {
    pub fn distribution(self) -> Distribution {
        match self {
            DataFamily::Normal => Distribution::Normal,
            DataFamily::T3 => Distribution::T { df: 3 },
            DataFamily::T4 => Distribution::T { df: 4 },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropRule {
    #[default]
    Uniform,
    Shortest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthMode {
    /// Uniform resolved topology, exponential lengths.
    Resolved,
    /// Resolved truth with `drop` internal splits removed.
    Unresolved {
        drop: usize,
        #[serde(default)]
        rule: DropRule,
    },
    /// All leaves at equal distance from the root.
    Equidistant,
    /// The built-in ten-leaf reference tree.
    Reference,
    /// An explicit tree in Newick form.
    Given { newick: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub p: usize,
    /// Sample sizes as multiples of `p`.
    pub sample_multipliers: Vec<usize>,
    pub families: Vec<DataFamily>,
    pub truth: TruthMode,
    /// Draw one truth for all replicates instead of one per replicate.
    #[serde(default)]
    pub fixed_truth: bool,
    pub replicates: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
    /// Mean edge length of randomly drawn truths.
    #[serde(default = "one")]
    pub truth_edge_mean: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Passes of the Frechet-mean iteration over the retained records.
    #[serde(default = "default_mean_passes")]
    pub mean_passes: usize,
}

fn one() -> f64 {
    1.0
}

fn default_level() -> f64 {
    0.95
}

fn default_mean_passes() -> usize {
    20
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(invalid("scenarios need p >= 2"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates must be at least 1"));
        }
        if self.sample_multipliers.is_empty() || self.sample_multipliers.contains(&0) {
            return Err(invalid("sample multipliers must be positive"));
        }
        if self.families.is_empty() {
            return Err(invalid("at least one data family is required"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(invalid("level must lie in (0, 1)"));
        }
        if self.mean_passes == 0 {
            return Err(invalid("mean_passes must be at least 1"));
        }
        if !(self.truth_edge_mean > 0.0) {
            return Err(invalid("truth_edge_mean must be positive"));
        }
        if matches!(self.truth, TruthMode::Reference) && self.p != 10 {
            return Err(invalid("the reference truth has p = 10"));
        }
        self.sampler.validate()
    }

    fn cells(&self) -> Vec<(usize, DataFamily)> {
        let mut out = Vec::new();
        for &f in &self.families {
            for &m in &self.sample_multipliers {
                out.push((m * self.p, f));
            }
        }
        out
    }

    fn iterations(&self) -> usize {
        match &self.sampler {
            SamplerConfig::Mh(c) => c.iterations,
            SamplerConfig::Hmc(c) => c.iterations,
        }
    }
}

/// The fixed ten-leaf truth used for split-recovery tables.
pub fn reference_truth() -> Tree {
    let p = 10;
    let splits: [(&[usize], f64); 8] = [
        (&[1, 2, 3, 4, 5, 6, 7, 8, 9], 0.701),
        (&[1, 2, 4], 0.872),
        (&[2, 4], 0.712),
        (&[3, 5, 6, 7, 8, 9], 0.880),
        (&[3, 5, 6, 8, 9], 0.878),
        (&[3, 9], 0.854),
        (&[5, 6], 0.231),
        (&[5, 6, 8], 0.869),
    ];
    let leaves = vec![0.52, 0.81, 0.33, 0.67, 0.45, 0.91, 0.58, 0.74, 0.39, 0.62];
    let internal = splits.iter().map(|(l, v)| (Split::from_leaves(l, p).expect("valid split"), *v));
    Tree::new(p, internal, leaves, 0.5).expect("reference truth is valid")
}

pub fn draw_truth(s: &Scenario, rng: &mut RngStream) -> Result<Tree> {
    let mean = s.truth_edge_mean;
    match &s.truth {
        TruthMode::Resolved => random_tree(s.p, RandomTreeMode::UniformBinary, mean, rng),
        TruthMode::Unresolved { drop, rule } => {
            let t = random_tree(s.p, RandomTreeMode::UniformBinary, mean, rng)?;
            match rule {
                DropRule::Uniform => collapse_uniform(&t, *drop, rng),
                DropRule::Shortest => collapse_shortest(&t, *drop),
            }
        }
        TruthMode::Equidistant => random_tree(s.p, RandomTreeMode::Equidistant, mean, rng),
        TruthMode::Reference => Ok(reference_truth()),
        TruthMode::Given { newick } => {
            let t = crate::treespace::parse_newick(newick)?;
            check_dim(s.p, t.p())?;
            Ok(t)
        }
    }
}

/// Tree distance and Frobenius norm of the difference.
pub fn score_point_estimate(est: &UltrametricMatrix, truth: &UltrametricMatrix) -> Result<(f64, f64)> {
    if est.p() != truth.p() {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", est.p(), est.p(), truth.p(), truth.p())));
    }
    let d = matrix_distance(est.matrix(), truth.matrix(), crate::ultrametric::DEFAULT_TOL)?;
    let f = (est.matrix() - truth.matrix()).norm();
    Ok((d, f))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub n: usize,
    pub family: DataFamily,
    pub truth_newick: String,
    /// Posterior frequency of every true split, in canonical order.
    pub recovery: Vec<f64>,
    pub coverage: f64,
    pub mean_distance: f64,
    pub mean_frobenius: f64,
    pub map_distance: f64,
    pub map_frobenius: f64,
    pub mean_log_lik: f64,
    pub se_log_lik: f64,
    pub mean_split_count: f64,
    pub true_log_lik: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spread {
    pub median: f64,
    pub sd: f64,
}

fn spread(xs: &[f64]) -> Spread {
    Spread {
        median: median(xs),
        sd: if xs.len() > 1 { variance(xs).sqrt() } else { 0.0 },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub n: usize,
    pub family: DataFamily,
    /// Per true split, when the truth is shared across replicates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_recovery: Option<Vec<Spread>>,
    /// Smallest true-split frequency within each replicate.
    pub min_recovery: Spread,
    pub coverage: Spread,
    pub mean_distance: Spread,
    pub mean_frobenius: Spread,
    pub map_distance: Spread,
    pub map_frobenius: Spread,
    pub mean_split_count: Spread,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    /// Canonical keys of the shared true splits, when there is one truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_splits: Option<Vec<String>>,
    pub cells: Vec<CellReport>,
    pub replicates: Vec<ReplicateResult>,
}

impl ScenarioReport {
    /// One row per cell; columns are the true splits when shared, otherwise
    /// summary statistics. Values are `median(sd)`.
    pub fn table_csv(&self) -> String {
        let mut out = String::new();
        let fmt = |s: &Spread| format!("{:.4}({:.4})", s.median, s.sd);
        match &self.true_splits {
            Some(keys) => {
                out.push_str("n,family");
                for k in keys {
                    out.push_str(&format!(",\"{{{k}}}\""));
                }
                out.push('\n');
                for c in &self.cells {
                    out.push_str(&format!("{},{}", c.n, family_name(c.family)));
                    for s in c.split_recovery.iter().flatten() {
                        out.push(',');
                        out.push_str(&fmt(s));
                    }
                    out.push('\n');
                }
            }
            None => {
                out.push_str("n,family,min_recovery,coverage,mean_distance,mean_frobenius,map_distance,map_frobenius\n");
                for c in &self.cells {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        c.n,
                        family_name(c.family),
                        fmt(&c.min_recovery),
                        fmt(&c.coverage),
                        fmt(&c.mean_distance),
                        fmt(&c.mean_frobenius),
                        fmt(&c.map_distance),
                        fmt(&c.map_frobenius)
                    ));
                }
            }
        }
        out
    }
}

fn family_name(f: DataFamily) -> &'static str {
    match f {
        DataFamily::Normal => "normal",
        DataFamily::T3 => "t3",
        DataFamily::T4 => "t4",
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Refuse scenarios estimated to take longer than this many seconds.
    pub max_seconds: f64,
    pub force: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_seconds: 1800.0,
            force: false,
        }
    }
}

/// Rough wall-clock estimate from timing likelihood evaluations at `p`.
pub fn estimate_seconds(s: &Scenario) -> Result<f64> {
    let truth = reference_like(s.p)?;
    let stats = SufficientStats::new(s.p, tree_to_matrix(&truth).into_inner())?;
    let reps = 50;
    let start = Instant::now();
    for _ in 0..reps {
        tree_loglik(&stats, &truth)?;
    }
    let per_eval = start.elapsed().as_secs_f64() / reps as f64;
    let evals_per_iter = match &s.sampler {
        SamplerConfig::Mh(_) => (2 * s.p) as f64,
        SamplerConfig::Hmc(c) => 2.0 * c.leapfrog_steps as f64,
    };
    let chains = (s.replicates * s.cells().len()) as f64;
    let threads = rayon::current_num_threads() as f64;
    Ok(per_eval * evals_per_iter * s.iterations() as f64 * chains / threads.min(chains))
}

fn reference_like(p: usize) -> Result<Tree> {
    let mut rng = RngStream::new(0, 0);
    random_tree(p, RandomTreeMode::UniformBinary, 1.0, &mut rng)
}

fn with_seed(cfg: &SamplerConfig, seed: u64) -> SamplerConfig {
    let mut c = cfg.clone();
    match &mut c {
        SamplerConfig::Mh(m) => m.seed = seed,
        SamplerConfig::Hmc(h) => h.seed = seed,
    }
    c
}

fn run_replicate(s: &Scenario, r: usize, shared_truth: Option<&Tree>) -> Result<Vec<ReplicateResult>> {
    let rep = RngStream::new(s.seed, streams::REPLICATE_BASE + r as u64);
    let truth = match shared_truth {
        Some(t) => t.clone(),
        None => draw_truth(s, &mut rep.derive(streams::TRUTH))?,
    };
    let truth_m = tree_to_matrix(&truth);
    let true_splits: Vec<Split> = truth.splits().copied().collect();
    let mut out = Vec::new();
    for (cell, (n, family)) in s.cells().into_iter().enumerate() {
        let mut data_rng = rep.derive(streams::DATA + cell as u64);
        let data = sample_data(truth_m.matrix(), family.distribution(), n, &mut data_rng)?;
        let stats = suff_stats(&data)?;
        let chain_seed = rep.derive(streams::CHAIN + cell as u64).next_u64();
        let cfg = with_seed(&s.sampler, chain_seed);
        let init = default_init(s.p, chain_seed, 0)?;
        let archive = run_chain(&stats, init, &cfg, 0)?;
        let recovery = true_splits
            .iter()
            .map(|sp| split_frequency(&archive, sp))
            .collect::<Result<Vec<_>>>()?;
        let (lo, hi) = credible_intervals(&archive, s.level)?;
        let cov = coverage(&lo, &hi, truth_m.matrix())?;
        let mean_cfg = MeanConfig {
            max_iterations: Some(s.mean_passes * archive.len()),
            pass_order: PassOrder::Cyclic,
            tolerance: 1e-8,
            metric: TreeMetric::Sum,
            rng: rep.derive(streams::MEAN + cell as u64),
        };
        let mean_m = tree_to_matrix(&posterior_mean_tree(&archive, &mean_cfg)?);
        let map_m = tree_to_matrix(&map_sample(&archive)?.tree);
        let (md, mf) = score_point_estimate(&mean_m, &truth_m)?;
        let (pd, pf) = score_point_estimate(&map_m, &truth_m)?;
        let ts = trace_stats(&archive)?;
        out.push(ReplicateResult {
            replicate: r,
            n,
            family,
            truth_newick: crate::treespace::to_newick(&truth),
            recovery,
            coverage: cov.rate,
            mean_distance: md,
            mean_frobenius: mf,
            map_distance: pd,
            map_frobenius: pf,
            mean_log_lik: ts.mean_log_lik,
            se_log_lik: ts.se_log_lik,
            mean_split_count: ts.mean_split_count,
            true_log_lik: tree_loglik(&stats, &truth)?,
        });
    }
    Ok(out)
}

pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    s.validate()?;
    if !opts.force {
        let est = estimate_seconds(s)?;
        if est > opts.max_seconds {
            return Err(invalid(format!(
                "scenario estimated at {est:.0} s exceeds the {:.0} s budget; rerun with force",
                opts.max_seconds
            )));
        }
    }
    let shared = if s.fixed_truth || matches!(s.truth, TruthMode::Reference | TruthMode::Given { .. }) {
        Some(draw_truth(s, &mut RngStream::new(s.seed, streams::TRUTH))?)
    } else {
        None
    };
    let per_rep: Vec<Vec<ReplicateResult>> = (0..s.replicates)
        .into_par_iter()
        .map(|r| run_replicate(s, r, shared.as_ref()))
        .collect::<Result<_>>()?;
    let replicates: Vec<ReplicateResult> = per_rep.into_iter().flatten().collect();
    let cells = s
        .cells()
        .into_iter()
        .map(|(n, family)| {
            let rs: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.n == n && r.family == family).collect();
            let col = |f: &dyn Fn(&ReplicateResult) -> f64| spread(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let split_recovery = shared.as_ref().map(|t| {
                (0..t.internal().len())
                    .map(|k| col(&|r| r.recovery[k]))
                    .collect::<Vec<_>>()
            });
            CellReport {
                n,
                family,
                split_recovery,
                min_recovery: col(&|r| r.recovery.iter().copied().fold(1.0, f64::min)),
                coverage: col(&|r| r.coverage),
                mean_distance: col(&|r| r.mean_distance),
                mean_frobenius: col(&|r| r.mean_frobenius),
                map_distance: col(&|r| r.map_distance),
                map_frobenius: col(&|r| r.map_frobenius),
                mean_split_count: col(&|r| r.mean_split_count),
            }
        })
        .collect();
    Ok(ScenarioReport {
        scenario: s.clone(),
        true_splits: shared.map(|t| t.splits().map(|s| s.key()).collect()),
        cells,
        replicates,
    })
}
