use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use ultratree::geometry::{bhv_distance, combine, leaf_term, MeanConfig, PassOrder, TreeMetric};
use ultratree::io::{parse_matrix_csv, read_data_csv, write_data_csv, write_matrix_csv};
use ultratree::model::{sample_data, suff_stats, Distribution, SufficientStats};
use ultratree::posterior::{posterior_mean_tree, rows, summarize, write_split_csv, PosteriorArchive};
use ultratree::rng::{streams, RngStream};
use ultratree::samplers::{data_init, default_init, run_chain};
use ultratree::sim::{run_scenario, DataFamily, RunOptions};
use ultratree::stats::mean;
use ultratree::treespace::{parse_newick, to_newick};
use ultratree::ultrametric::{validate_ultrametric, ValidationReport};
use ultratree::{matrix_to_tree, tree_to_matrix, Tree};

use crate::config::{ConfigError, RunConfig};

/// Input that violates a domain rule; reported with exit code 1.
#[derive(Debug)]
pub struct DomainError(pub String);

impl std::fmt::Display for DomainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainError {}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Format {
    Newick,
    Matrix,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Metric {
    Sum,
    L2,
}

impl From<Metric> for TreeMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Sum => TreeMetric::Sum,
            Metric::L2 => TreeMetric::L2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum InitKind {
    Random,
    Data,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum Family {
    Normal,
    T3,
    T4,
}

impl From<Family> for DataFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Normal => DataFamily::Normal,
            Family::T3 => DataFamily::T3,
            Family::T4 => DataFamily::T4,
        }
    }
}

fn report_json(r: &ValidationReport) -> serde_json::Value {
    json!({ "valid": r.is_valid(), "violations": r.violations })
}

fn is_newick(text: &str) -> bool {
    text.trim_start().starts_with('(')
}

/// A tree given either as Newick text or as a matrix CSV.
pub fn read_tree(path: &Path, tol: f64) -> Result<Tree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if is_newick(&text) {
        return Ok(parse_newick(text.trim())?);
    }
    let m = parse_matrix_csv(text.as_bytes()).with_context(|| format!("reading {}", path.display()))?;
    let report = validate_ultrametric(&m, tol)?;
    if !report.is_valid() {
        bail!(DomainError(format!(
            "{} is not strictly ultrametric: {}",
            path.display(),
            serde_json::to_string(&report_json(&report))?
        )));
    }
    Ok(matrix_to_tree(&m, tol)?)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn matrix_text(m: &nalgebra::DMatrix<f64>) -> Result<String> {
    let mut buf = Vec::new();
    write_matrix_csv(m, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

pub fn validate(input: &Path, tol: f64) -> Result<u8> {
    let file = File::open(input).with_context(|| format!("reading {}", input.display()))?;
    let m = parse_matrix_csv(file).with_context(|| format!("reading {}", input.display()))?;
    let report = validate_ultrametric(&m, tol)?;
    let mut v = report_json(&report);
    v["p"] = json!(m.nrows());
    write_out(None, &pretty(&v)?)?;
    Ok(if report.is_valid() { 0 } else { 1 })
}

pub fn convert(input: &Path, to: Format, output: Option<&Path>, tol: f64) -> Result<u8> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let tree = if is_newick(&text) {
        parse_newick(text.trim())?
    } else {
        let m = parse_matrix_csv(text.as_bytes()).with_context(|| format!("reading {}", input.display()))?;
        let report = validate_ultrametric(&m, tol)?;
        if !report.is_valid() {
            write_out(None, &pretty(&report_json(&report))?)?;
            return Ok(1);
        }
        matrix_to_tree(&m, tol)?
    };
    let out = match to {
        Format::Newick => to_newick(&tree) + "\n",
        Format::Matrix => matrix_text(tree_to_matrix(&tree).matrix())?,
    };
    write_out(output, &out)?;
    Ok(0)
}

pub fn distance(a: &Path, b: &Path, metric: Metric, tol: f64) -> Result<u8> {
    let (ta, tb) = (read_tree(a, tol)?, read_tree(b, tol)?);
    if ta.p() != tb.p() {
        bail!(DomainError(format!("trees have {} and {} leaves", ta.p(), tb.p())));
    }
    let (d_bhv, support) = bhv_distance(&ta, &tb)?;
    let leaf = leaf_term(&ta, &tb)?;
    let v = json!({
        "d_bhv": d_bhv,
        "leaf_term": leaf,
        "d_tree": combine(metric.into(), d_bhv, leaf),
        "metric": format!("{metric:?}").to_lowercase(),
        "support": support,
    });
    write_out(None, &pretty(&v)?)?;
    Ok(0)
}

pub struct SampleArgs {
    pub config: PathBuf,
    pub chains: Option<usize>,
    pub inits: Vec<PathBuf>,
    pub init: InitKind,
    pub output: Option<PathBuf>,
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}{suffix}"))
}

fn chain_paths(output: &Path, trace: Option<&Path>, chain: usize, chains: usize) -> (PathBuf, PathBuf) {
    let ext = output.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    let archive = if chains == 1 {
        output.to_path_buf()
    } else {
        with_suffix(output, &format!(".chain{chain}{ext}"))
    };
    let trace = match trace {
        Some(t) if chains == 1 => t.to_path_buf(),
        Some(t) => with_suffix(t, &format!(".chain{chain}.csv")),
        None => with_suffix(&archive, ".trace.csv"),
    };
    (archive, trace)
}

pub fn sample(args: SampleArgs) -> Result<u8> {
    let mut cfg = RunConfig::load(&args.config)?;
    if !args.inits.is_empty() {
        cfg.io.inits = args.inits.clone();
    }
    if let Some(o) = &args.output {
        cfg.io.output = Some(o.clone());
    }
    cfg.io.check_paths()?;
    let sampler = cfg.sampler()?;
    let p = cfg.model.p;
    let chains = match (args.chains, cfg.io.inits.len()) {
        (Some(c), 0) => c,
        (Some(c), k) if c == k => c,
        (Some(c), k) => bail!(ConfigError(format!("--chains {c} but {k} init trees were given"))),
        (None, 0) => 1,
        (None, k) => k,
    };
    if chains == 0 {
        bail!(ConfigError("--chains must be at least 1".into()));
    }
    let stats = match &cfg.io.data {
        Some(path) => {
            let d = read_data_csv(path, Distribution::Normal).with_context(|| format!("reading {}", path.display()))?;
            if d.p() != p {
                bail!(DomainError(format!("data has {} columns but model.p = {p}", d.p())));
            }
            suff_stats(&d)?
        }
        None => SufficientStats::empty(p),
    };
    let inits: Vec<Tree> = if cfg.io.inits.is_empty() {
        (0..chains)
            .map(|k| match args.init {
                InitKind::Random => Ok(default_init(p, cfg.seed, k as u64)?),
                InitKind::Data => Ok(data_init(&stats)?),
            })
            .collect::<Result<_>>()?
    } else {
        cfg.io.inits.iter().map(|path| read_tree(path, ultratree::ultrametric::DEFAULT_TOL)).collect::<Result<_>>()?
    };
    for t in &inits {
        if t.p() != p {
            bail!(DomainError(format!("init tree has {} leaves but model.p = {p}", t.p())));
        }
    }
    let output = cfg.io.output.clone().unwrap_or_else(|| PathBuf::from("posterior.jsonl"));
    let archives: Vec<PosteriorArchive> = inits
        .into_par_iter()
        .enumerate()
        .map(|(k, init)| run_chain(&stats, init, &sampler, k as u64))
        .collect::<ultratree::Result<_>>()?;
    let mut summary = Vec::new();
    for (k, a) in archives.iter().enumerate() {
        let (archive, trace) = chain_paths(&output, cfg.io.trace.as_deref(), k, chains);
        a.save(&archive, Some(&trace))?;
        let ll: Vec<f64> = a.records.iter().map(|r| r.log_lik).collect();
        summary.push(json!({
            "chain": k,
            "archive": archive,
            "trace": trace,
            "records": a.len(),
            "acceptance": a.acceptance,
            "mean_log_lik": mean(&ll),
        }));
    }
    write_out(None, &pretty(&summary)?)?;
    Ok(0)
}

fn mean_config(len: usize, passes: usize, seed: u64, metric: Metric) -> MeanConfig {
    MeanConfig {
        max_iterations: Some(passes.max(1) * len),
        pass_order: PassOrder::Cyclic,
        tolerance: 1e-8,
        metric: metric.into(),
        rng: RngStream::new(seed, streams::MEAN),
    }
}

pub struct SummarizeArgs {
    pub archive: PathBuf,
    pub truth: Option<PathBuf>,
    pub level: f64,
    pub mean_passes: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub splits_csv: Option<PathBuf>,
}

pub fn summarize_cmd(args: SummarizeArgs) -> Result<u8> {
    let archive = PosteriorArchive::load(&args.archive).with_context(|| format!("reading {}", args.archive.display()))?;
    let truth = args
        .truth
        .as_deref()
        .map(|t| read_tree(t, ultratree::ultrametric::DEFAULT_TOL))
        .transpose()?;
    let cfg = mean_config(archive.len(), args.mean_passes, args.seed, Metric::Sum);
    let report = summarize(&archive, args.level, &cfg, truth.as_ref())?;
    write_out(args.output.as_deref(), &pretty(&report)?)?;
    if let Some(path) = &args.splits_csv {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?);
        write_split_csv(&report, &mut w)?;
        w.flush()?;
    }
    Ok(0)
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub force: bool,
    pub max_seconds: f64,
    pub output: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<u8> {
    let mut cfg = RunConfig::load(&args.config)?;
    if args.output.is_some() {
        cfg.io.report = args.output.clone();
    }
    if args.table.is_some() {
        cfg.io.table = args.table.clone();
    }
    cfg.io.check_paths()?;
    let scenario = cfg.scenario()?;
    let opts = RunOptions {
        max_seconds: args.max_seconds,
        force: args.force,
    };
    let report = run_scenario(&scenario, &opts)?;
    write_out(cfg.io.report.as_deref(), &pretty(&report)?)?;
    if let Some(t) = &cfg.io.table {
        std::fs::write(t, report.table_csv()).with_context(|| format!("writing {}", t.display()))?;
    }
    Ok(0)
}

pub struct MeanArgs {
    pub input: PathBuf,
    pub passes: usize,
    pub seed: u64,
    pub metric: Metric,
    pub matrix: Option<PathBuf>,
    pub newick: Option<PathBuf>,
}

/// Reads an archive, or a list of Newick trees one per line.
fn read_trees(path: &Path) -> Result<Vec<Tree>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if is_newick(&text) {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| Ok(parse_newick(l.trim())?))
            .collect()
    } else {
        let a = PosteriorArchive::read_jsonl(text.as_bytes())?;
        Ok(a.records.into_iter().map(|r| r.tree).collect())
    }
}

pub fn mean_cmd(args: MeanArgs) -> Result<u8> {
    let trees = read_trees(&args.input)?;
    if trees.is_empty() {
        bail!(DomainError(format!("{} holds no trees", args.input.display())));
    }
    let archive = PosteriorArchive::from_trees(trees)?;
    let cfg = mean_config(archive.len(), args.passes, args.seed, args.metric);
    let tree = posterior_mean_tree(&archive, &cfg)?;
    let m = tree_to_matrix(&tree).into_inner();
    let newick = to_newick(&tree);
    if let Some(path) = &args.matrix {
        write_out(Some(path), &matrix_text(&m)?)?;
    }
    if let Some(path) = &args.newick {
        write_out(Some(path), &(newick.clone() + "\n"))?;
    }
    if args.matrix.is_none() && args.newick.is_none() {
        write_out(None, &pretty(&json!({ "newick": newick, "matrix": rows(&m) }))?)?;
    }
    Ok(0)
}

pub struct GenerateArgs {
    pub truth: PathBuf,
    pub n: usize,
    pub family: Family,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

pub fn generate(args: GenerateArgs) -> Result<u8> {
    let tree = read_tree(&args.truth, ultratree::ultrametric::DEFAULT_TOL)?;
    let mut rng = RngStream::new(args.seed, streams::DATA);
    let dist = DataFamily::from(args.family).distribution();
    let data = sample_data(tree_to_matrix(&tree).matrix(), dist, args.n, &mut rng)?;
    let mut buf = Vec::new();
    write_data_csv(&data, &mut buf)?;
    write_out(args.output.as_deref(), &String::from_utf8(buf)?)?;
    Ok(0)
}
