//! TOML run configuration shared by `sample` and `simulate`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use ultratree::priors::{PriorSpec, TopologyPrior};
use ultratree::samplers::{HmcConfig, MhConfig, MhMode, SamplerConfig};
use ultratree::sim::{DataFamily, Scenario, TruthMode};

/// Configuration problem; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub io: IoSection,
    pub scenario: Option<ScenarioSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub p: usize,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    BetaSplitting,
    PoissonDirichlet,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default)]
    pub kind: PriorKind,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub alpha_pd: Option<f64>,
    pub edge_mean: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    #[default]
    Mh,
    Hmc,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default)]
    pub algo: Algo,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    /// Rate of the exponential edge prior; the mean is `1 / lambda`.
    pub lambda: Option<f64>,
    pub mode: Option<MhMode>,
    #[serde(alias = "sigma_L")]
    pub sigma_l: Option<f64>,
    pub epsilon: Option<f64>,
    pub leapfrog_steps: Option<usize>,
    pub delta: Option<f64>,
    pub mass: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// Observations, one row per sample. Absent means no data (prior only).
    pub data: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Newick start trees, one per chain.
    #[serde(default)]
    pub inits: Vec<PathBuf>,
    pub report: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

fn resolved() -> TruthMode {
    TruthMode::Resolved
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub sample_multipliers: Vec<usize>,
    pub families: Vec<DataFamily>,
    #[serde(default = "resolved")]
    pub truth: TruthMode,
    #[serde(default)]
    pub fixed_truth: bool,
    pub replicates: usize,
    pub truth_edge_mean: Option<f64>,
    pub level: Option<f64>,
    pub mean_passes: Option<usize>,
}

impl RunConfig {
    /// Parses `path` and resolves relative io paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.io.resolve(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if cfg.model.p == 0 {
            return Err(config_err("model.p must be at least 1"));
        }
        Ok(cfg)
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        let pr = &self.prior;
        let topology = match pr.kind {
            PriorKind::BetaSplitting => {
                if pr.theta.is_some() || pr.alpha_pd.is_some() {
                    return Err(config_err("prior.theta and prior.alpha_pd need kind = \"poisson-dirichlet\""));
                }
                TopologyPrior::BetaSplitting { beta: pr.beta.unwrap_or(-1.5) }
            }
            PriorKind::PoissonDirichlet => {
                if pr.beta.is_some() {
                    return Err(config_err("prior.beta needs kind = \"beta-splitting\""));
                }
                let d = TopologyPrior::default_pd();
                let TopologyPrior::PoissonDirichlet { theta, alpha_pd } = d else { unreachable!() };
                TopologyPrior::PoissonDirichlet {
                    theta: pr.theta.unwrap_or(theta),
                    alpha_pd: pr.alpha_pd.unwrap_or(alpha_pd),
                }
            }
        };
        let edge_mean = match (pr.edge_mean, self.sampler.lambda) {
            (Some(_), Some(_)) => return Err(config_err("set prior.edge_mean or sampler.lambda, not both")),
            (Some(m), None) => m,
            (None, Some(l)) => {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(config_err(format!("sampler.lambda must be positive, got {l}")));
                }
                1.0 / l
            }
            (None, None) => 1.0,
        };
        let spec = PriorSpec { topology, edge_mean };
        spec.validate().map_err(|e| config_err(format!("prior: {e}")))?;
        Ok(spec)
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let s = &self.sampler;
        let prior = self.prior()?;
        let cfg = match s.algo {
            Algo::Mh => {
                for (key, set) in [
                    ("epsilon", s.epsilon.is_some()),
                    ("leapfrog_steps", s.leapfrog_steps.is_some()),
                    ("delta", s.delta.is_some()),
                    ("mass", s.mass.is_some()),
                ] {
                    if set {
                        return Err(config_err(format!("sampler.{key} applies to algo = \"hmc\" only")));
                    }
                }
                let d = MhConfig::default();
                SamplerConfig::Mh(MhConfig {
                    iterations: s.iterations.unwrap_or(d.iterations),
                    burn_in: s.burn_in.unwrap_or(d.burn_in),
                    sigma_l: s.sigma_l.unwrap_or(d.sigma_l),
                    mode: s.mode.unwrap_or(d.mode),
                    prior,
                    seed: self.seed,
                    thin: s.thin.unwrap_or(d.thin),
                })
            }
            Algo::Hmc => {
                for (key, set) in [("mode", s.mode.is_some()), ("sigma_l", s.sigma_l.is_some())] {
                    if set {
                        return Err(config_err(format!("sampler.{key} applies to algo = \"mh\" only")));
                    }
                }
                let d = HmcConfig::default();
                SamplerConfig::Hmc(HmcConfig {
                    iterations: s.iterations.unwrap_or(d.iterations),
                    burn_in: s.burn_in.unwrap_or(d.burn_in),
                    step_size: s.epsilon.unwrap_or(d.step_size),
                    leapfrog_steps: s.leapfrog_steps.unwrap_or(d.leapfrog_steps),
                    delta: s.delta.unwrap_or(d.delta),
                    mass: s.mass.clone().unwrap_or(d.mass),
                    prior,
                    seed: self.seed,
                    thin: s.thin.unwrap_or(d.thin),
                })
            }
        };
        cfg.validate().map_err(|e| config_err(format!("sampler: {e}")))?;
        Ok(cfg)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let Some(sc) = &self.scenario else {
            bail!(ConfigError("simulate needs a [scenario] section".into()));
        };
        let s = Scenario {
            p: self.model.p,
            sample_multipliers: sc.sample_multipliers.clone(),
            families: sc.families.clone(),
            truth: sc.truth.clone(),
            fixed_truth: sc.fixed_truth,
            replicates: sc.replicates,
            sampler: self.sampler()?,
            seed: self.seed,
            truth_edge_mean: sc.truth_edge_mean.unwrap_or(1.0),
            level: sc.level.unwrap_or(0.95),
            mean_passes: sc.mean_passes.unwrap_or(20),
        };
        s.validate().map_err(|e| config_err(format!("scenario: {e}")))?;
        Ok(s)
    }
}

impl IoSection {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.data, &mut self.output, &mut self.trace, &mut self.report, &mut self.table]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.inits.iter_mut().for_each(fix);
    }

    /// Inputs must exist and outputs must have an existing parent directory.
    pub fn check_paths(&self) -> Result<()> {
        for (key, p) in [("io.data", &self.data)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(config_err(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        for p in &self.inits {
            if !p.is_file() {
                return Err(config_err(format!("io.inits: {} does not exist", p.display())));
            }
        }
        for (key, p) in [
            ("io.output", &self.output),
            ("io.trace", &self.trace),
            ("io.report", &self.report),
            ("io.table", &self.table),
        ] {
            if let Some(p) = p {
                let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                if !parent.is_dir() {
                    return Err(config_err(format!("{key}: directory {} does not exist", parent.display())));
                }
            }
        }
        Ok(())
    }
}
