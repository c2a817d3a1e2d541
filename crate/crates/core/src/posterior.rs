//! Posterior archives and their summaries: split frequencies, element-wise
//! credible intervals, MAP selection, the Frechet-mean matrix and coverage.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::geometry::{frechet_mean, MeanConfig};
use crate::stats::{batch_means_se, mean, quantile_sorted};
use crate::treespace::{to_newick, Split, Tree};
use crate::ultrametric::{tree_to_matrix, UltrametricMatrix};

/// One retained sampler state.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub iter: usize,
    pub log_prior: f64,
    pub log_lik: f64,
    pub tree: Tree,
}

impl Record {
    pub fn log_posterior(&self) -> f64 {
        self.log_prior + self.log_lik
    }
}

/// On-disk form of a [`Record`].
#[derive(Serialize, Deserialize)]
struct RecordLine {
    iter: usize,
    log_prior: f64,
    log_lik: f64,
    splits: Vec<Vec<usize>>,
    lengths: BTreeMap<String, f64>,
    leaf_lengths: Vec<f64>,
    root_length: f64,
}

impl Serialize for Record {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let t = &self.tree;
        RecordLine {
            iter: self.iter,
            log_prior: self.log_prior,
            log_lik: self.log_lik,
            splits: t.splits().map(|s| s.leaves()).collect(),
            lengths: t.internal().iter().map(|(s, v)| (s.key(), *v)).collect(),
            leaf_lengths: t.leaf_lengths().to_vec(),
            root_length: t.root_length(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Record {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let line = RecordLine::deserialize(de)?;
        let p = line.leaf_lengths.len();
        let mut internal = Vec::with_capacity(line.splits.len());
        for leaves in &line.splits {
            let s = Split::from_leaves(leaves, p).map_err(D::Error::custom)?;
            let v = *line
                .lengths
                .get(&s.key())
                .ok_or_else(|| D::Error::custom(format!("no length for split {s}")))?;
            internal.push((s, v));
        }
        if internal.len() != line.lengths.len() {
            return Err(D::Error::custom("lengths and splits disagree"));
        }
        let tree = Tree::new(p, internal, line.leaf_lengths, line.root_length).map_err(D::Error::custom)?;
        Ok(Record {
            iter: line.iter,
            log_prior: line.log_prior,
            log_lik: line.log_lik,
            tree,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub algo: String,
    /// Hex SHA-256 of the sampler configuration as JSON.
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub topology_proposed: u64,
    pub topology_accepted: u64,
    pub length_proposed: u64,
    pub length_accepted: u64,
    /// Trajectories rejected because the Hamiltonian was not finite.
    pub divergent: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iter: usize,
    pub log_lik: f64,
}

/// Archive metadata stored next to the JSON-lines records.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ArchiveMeta {
    p: usize,
    provenance: Provenance,
    acceptance: Acceptance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorArchive {
    pub p: usize,
    pub provenance: Provenance,
    pub acceptance: Acceptance,
    pub records: Vec<Record>,
    /// Log-likelihood at every iteration, burn-in included.
    pub trace: Vec<TracePoint>,
}

impl PosteriorArchive {
    pub fn new(p: usize, provenance: Provenance) -> Self {
        Self {
            p,
            provenance,
            acceptance: Acceptance::default(),
            records: Vec::new(),
            trace: Vec::new(),
        }
    }

    /// Archive over a plain list of trees, e.g. for averaging.
    pub fn from_trees(trees: Vec<Tree>) -> Result<Self> {
        let p = trees.first().ok_or_else(|| invalid("empty tree list"))?.p();
        let mut a = Self::new(p, Provenance::default());
        for (i, tree) in trees.into_iter().enumerate() {
            check_dim(p, tree.p())?;
            a.records.push(Record {
                iter: i,
                log_prior: 0.0,
                log_lik: 0.0,
                tree,
            });
        }
        Ok(a)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn trees(&self) -> impl Iterator<Item = &Tree> {
        self.records.iter().map(|r| &r.tree)
    }

    fn require_records(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(invalid("posterior archive has no records"));
        }
        Ok(())
    }

    /// Checks that every record is a valid tree on `p` leaves and that
    /// iterations strictly increase.
    pub fn check(&self) -> Result<()> {
        for w in self.records.windows(2) {
            if w[1].iter <= w[0].iter {
                return Err(Error::Data(format!(
                    "iterations not strictly increasing at {}",
                    w[1].iter
                )));
            }
        }
        for r in &self.records {
            check_dim(self.p, r.tree.p())?;
            r.tree.check_invariants()?;
        }
        Ok(())
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_trace_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "iter,log_lik")?;
        for t in &self.trace {
            writeln!(w, "{},{:?}", t.iter, t.log_lik)?;
        }
        Ok(())
    }

    /// Writes `path` (records), `path.meta.json` and, if given, the trace CSV.
    pub fn save(&self, path: &Path, trace: Option<&Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        let meta = ArchiveMeta {
            p: self.p,
            provenance: self.provenance.clone(),
            acceptance: self.acceptance,
        };
        let mut m = BufWriter::new(File::create(meta_path(path))?);
        serde_json::to_writer_pretty(&mut m, &meta)?;
        m.write_all(b"\n")?;
        m.flush()?;
        if let Some(tp) = trace {
            let mut t = BufWriter::new(File::create(tp)?);
            self.write_trace_csv(&mut t)?;
            t.flush()?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("archive line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        let p = records
            .first()
            .map(|r| r.tree.p())
            .ok_or_else(|| Error::Data("archive has no records".into()))?;
        let a = Self {
            p,
            provenance: Provenance::default(),
            acceptance: Acceptance::default(),
            records,
            trace: Vec::new(),
        };
        a.check()?;
        Ok(a)
    }

    /// Reads records and, when present, the metadata sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let mut a = Self::read_jsonl(BufReader::new(File::open(path)?))?;
        let mp = meta_path(path);
        if mp.exists() {
            let meta: ArchiveMeta = serde_json::from_reader(BufReader::new(File::open(mp)?))?;
            check_dim(meta.p, a.p)?;
            a.provenance = meta.provenance;
            a.acceptance = meta.acceptance;
        }
        Ok(a)
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Fraction of records containing each split that appears at least once.
pub fn split_frequencies(archive: &PosteriorArchive) -> Result<BTreeMap<Split, f64>> {
    archive.require_records()?;
    let mut counts: BTreeMap<Split, usize> = BTreeMap::new();
    for t in archive.trees() {
        for s in t.splits() {
            *counts.entry(*s).or_default() += 1;
        }
    }
    let n = archive.len() as f64;
    Ok(counts.into_iter().map(|(s, c)| (s, c as f64 / n)).collect())
}

pub fn split_frequency(archive: &PosteriorArchive, split: &Split) -> Result<f64> {
    archive.require_records()?;
    let c = archive.trees().filter(|t| t.has_split(split)).count();
    Ok(c as f64 / archive.len() as f64)
}

/// Mean number of internal splits per record.
pub fn mean_split_count(archive: &PosteriorArchive) -> Result<f64> {
    archive.require_records()?;
    let total: usize = archive.trees().map(|t| t.internal().len()).sum();
    Ok(total as f64 / archive.len() as f64)
}

/// Equal-tailed element-wise intervals of the sampled matrices.
pub fn credible_intervals(archive: &PosteriorArchive, level: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    archive.require_records()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("credible level must lie in (0, 1), got {level}")));
    }
    let p = archive.p;
    let mats: Vec<DMatrix<f64>> = archive.trees().map(|t| tree_to_matrix(t).into_inner()).collect();
    let (qlo, qhi) = ((1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0);
    let mut lo = DMatrix::zeros(p, p);
    let mut hi = DMatrix::zeros(p, p);
    let mut column = Vec::with_capacity(mats.len());
    for i in 0..p {
        for j in 0..=i {
            column.clear();
            column.extend(mats.iter().map(|m| m[(i, j)]));
            column.sort_by(f64::total_cmp);
            let (l, h) = (quantile_sorted(&column, qlo), quantile_sorted(&column, qhi));
            lo[(i, j)] = l;
            lo[(j, i)] = l;
            hi[(i, j)] = h;
            hi[(j, i)] = h;
        }
    }
    Ok((lo, hi))
}

/// Record with the largest unnormalized log posterior; earliest wins ties.
pub fn map_sample(archive: &PosteriorArchive) -> Result<&Record> {
    archive.require_records()?;
    let mut best = &archive.records[0];
    for r in &archive.records[1..] {
        if r.log_posterior() > best.log_posterior() {
            best = r;
        }
    }
    Ok(best)
}

pub fn posterior_mean_tree(archive: &PosteriorArchive, cfg: &MeanConfig) -> Result<Tree> {
    archive.require_records()?;
    let trees: Vec<Tree> = archive.trees().cloned().collect();
    frechet_mean(&trees, cfg)
}

pub fn posterior_mean(archive: &PosteriorArchive, cfg: &MeanConfig) -> Result<UltrametricMatrix> {
    Ok(tree_to_matrix(&posterior_mean_tree(archive, cfg)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage {
    /// `covered[i][j]` for the full matrix.
    pub covered: Vec<Vec<bool>>,
    /// Mean over the lower triangle including the diagonal.
    pub rate: f64,
}

pub fn coverage(lo: &DMatrix<f64>, hi: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Coverage> {
    let p = truth.nrows();
    for m in [lo, hi, truth] {
        if m.nrows() != p || m.ncols() != p {
            return Err(Error::Shape(format!(
                "expected {p}x{p}, found {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let covered: Vec<Vec<bool>> = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| lo[(i, j)] <= truth[(i, j)] && truth[(i, j)] <= hi[(i, j)])
                .collect()
        })
        .collect();
    let mut hits = 0usize;
    for (i, row) in covered.iter().enumerate() {
        hits += row[..=i].iter().filter(|&&c| c).count();
    }
    let rate = hits as f64 / (p * (p + 1) / 2) as f64;
    Ok(Coverage { covered, rate })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStats {
    pub retained: usize,
    pub mean_log_lik: f64,
    /// Batch-means standard error of `mean_log_lik`.
    pub se_log_lik: f64,
    pub mean_split_count: f64,
}

pub fn trace_stats(archive: &PosteriorArchive) -> Result<TraceStats> {
    archive.require_records()?;
    let ll: Vec<f64> = archive.records.iter().map(|r| r.log_lik).collect();
    Ok(TraceStats {
        retained: ll.len(),
        mean_log_lik: mean(&ll),
        se_log_lik: if ll.len() > 1 { batch_means_se(&ll) } else { 0.0 },
        mean_split_count: mean_split_count(archive)?,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitRecovery {
    pub split: Split,
    pub frequency: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryReport {
    pub split_frequencies: Vec<SplitRecovery>,
    pub level: f64,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub map_iter: usize,
    pub map_newick: String,
    pub mean_newick: String,
    pub mean_matrix: Vec<Vec<f64>>,
    pub trace: TraceStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    /// Frequency of every true split, when a truth is supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<Vec<SplitRecovery>>,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn summarize(
    archive: &PosteriorArchive,
    level: f64,
    mean_cfg: &MeanConfig,
    truth: Option<&Tree>,
) -> Result<SummaryReport> {
    let freqs = split_frequencies(archive)?;
    let (lo, hi) = credible_intervals(archive, level)?;
    let map = map_sample(archive)?;
    let mean_tree = posterior_mean_tree(archive, mean_cfg)?;
    let mean_matrix = tree_to_matrix(&mean_tree).into_inner();
    let (cov, recovery) = match truth {
        Some(t) => {
            check_dim(archive.p, t.p())?;
            let cov = coverage(&lo, &hi, tree_to_matrix(t).matrix())?;
            let rec = t
                .splits()
                .map(|s| SplitRecovery {
                    split: *s,
                    frequency: freqs.get(s).copied().unwrap_or(0.0),
                })
                .collect();
            (Some(cov), Some(rec))
        }
        None => (None, None),
    };
    Ok(SummaryReport {
        split_frequencies: freqs
            .into_iter()
            .map(|(split, frequency)| SplitRecovery { split, frequency })
            .collect(),
        level,
        lower: rows(&lo),
        upper: rows(&hi),
        map_iter: map.iter,
        map_newick: to_newick(&map.tree),
        mean_newick: to_newick(&mean_tree),
        mean_matrix: rows(&mean_matrix),
        trace: trace_stats(archive)?,
        coverage: cov,
        recovery,
    })
}

/// Split-frequency table with splits rendered as space-separated leaves.
pub fn write_split_csv(report: &SummaryReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "split,frequency")?;
    for r in &report.split_frequencies {
        let leaves: Vec<String> = r.split.leaves().iter().map(|l| l.to_string()).collect();
        writeln!(w, "{},{:?}", leaves.join(" "), r.frequency)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(leaves: &[usize]) -> Split {
        Split::from_leaves(leaves, 4).unwrap()
    }

    fn tree(splits: &[(&[usize], f64)]) -> Tree {
        Tree::new(4, splits.iter().map(|(l, v)| (s(l), *v)), vec![1.0; 4], 0.5).unwrap()
    }

    fn archive(trees: Vec<Tree>) -> PosteriorArchive {
        PosteriorArchive::from_trees(trees).unwrap()
    }

    #[test]
    fn frequencies_count_records() {
        let a = tree(&[(&[1, 2], 0.3)]);
        let b = tree(&[(&[3, 4], 0.3)]);
        let arc = archive(vec![a.clone(), a.clone(), a, b]);
        let f = split_frequencies(&arc).unwrap();
        assert_eq!(f[&s(&[1, 2])], 0.75);
        assert_eq!(f[&s(&[3, 4])], 0.25);
        assert_eq!(split_frequency(&arc, &s(&[1, 3])).unwrap(), 0.0);
        assert!(split_frequencies(&PosteriorArchive::new(4, Provenance::default())).is_err());
    }

    #[test]
    fn map_prefers_higher_then_earlier() {
        let mut arc = archive(vec![tree(&[]), tree(&[(&[1, 2], 0.1)]), tree(&[(&[1, 3], 0.1)])]);
        arc.records[0].log_lik = -10.0;
        arc.records[1].log_lik = -5.0;
        arc.records[2].log_lik = -5.0;
        assert_eq!(map_sample(&arc).unwrap().iter, 1);
    }

    #[test]
    fn degenerate_intervals_cover() {
        let t = tree(&[(&[1, 2], 0.3)]);
        let arc = archive(vec![t.clone(); 3]);
        let (lo, hi) = credible_intervals(&arc, 0.95).unwrap();
        let m = tree_to_matrix(&t).into_inner();
        assert_eq!(lo, m);
        assert_eq!(hi, m);
        assert_eq!(coverage(&lo, &hi, &m).unwrap().rate, 1.0);
        let shifted = m.add_scalar(10.0);
        assert_eq!(coverage(&lo, &hi, &shifted).unwrap().rate, 0.0);
        assert!(credible_intervals(&arc, 1.0).is_err());
    }

    #[test]
    fn record_json_round_trip() {
        let t = tree(&[(&[1, 2], 0.3), (&[1, 2, 3], 0.25)]);
        let r = Record {
            iter: 7,
            log_prior: -1.5,
            log_lik: -20.25,
            tree: t,
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"1,2,3\":0.25"));
        assert!(line.contains("\"splits\":[[1,2],[1,2,3]]"));
        let back: Record = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
