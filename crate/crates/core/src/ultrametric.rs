//! Strictly ultrametric covariance matrices and their bijection with trees.
//!
//! [`tree_to_matrix`] sums `|e_A| * E_A` over every stored edge, where `E_A`
//! is the 0/1 block on `A x A`. [`matrix_to_tree`] inverts it by repeated
//! min-entry decomposition: the smallest entry of a block is the length of
//! the edge above it, and the residual splits into connected components.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Cholesky, DMatrix};
use serde::Serialize;

use crate::error::{check_dim, invalid, Error, Result};
use crate::treespace::{Split, Tree};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    Asymmetric { i: usize, j: usize },
    Negative { i: usize, j: usize },
    NonPositiveDiagonal { i: usize },
    /// `m[i][i]` does not strictly exceed `m[i][j]`.
    StrictDiagonalDominance { i: usize, j: usize },
    /// `m[i][j] < min(m[i][k], m[k][j])`.
    ThreePoint { i: usize, j: usize, k: usize },
    NotPositiveDefinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Asymmetric { i, j } => write!(f, "asymmetric at ({i},{j})"),
            Violation::Negative { i, j } => write!(f, "negative entry at ({i},{j})"),
            Violation::NonPositiveDiagonal { i } => write!(f, "non-positive diagonal at {i}"),
            Violation::StrictDiagonalDominance { i, j } => {
                write!(f, "strict diagonal dominance fails: m[{i},{i}] <= m[{i},{j}]")
            }
            Violation::ThreePoint { i, j, k } => {
                write!(f, "three-point condition fails at (i,j,k)=({i},{j},{k})")
            }
            Violation::NotPositiveDefinite => write!(f, "not positive definite"),
        }
    }
}

/// Every violated clause, each with its first witness (1-based indices).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_ultrametric(m: &DMatrix<f64>, tol: f64) -> Result<ValidationReport> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if !(tol >= 0.0) {
        return Err(invalid("tolerance must be non-negative"));
    }
    let p = m.nrows();
    let mut v = Vec::new();
    if p == 0 {
        return Err(Error::Shape("matrix is empty".into()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let first = |pred: &dyn Fn(usize, usize) -> bool| -> Option<(usize, usize)> {
        (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).find(|&(i, j)| pred(i, j))
    };
    if let Some((i, j)) = first(&|i, j| i < j && (m[(i, j)] - m[(j, i)]).abs() > tol) {
        v.push(Violation::Asymmetric { i: i + 1, j: j + 1 });
    }
    if let Some((i, j)) = first(&|i, j| m[(i, j)] < -tol) {
        v.push(Violation::Negative { i: i + 1, j: j + 1 });
    }
    if let Some(i) = (0..p).find(|&i| m[(i, i)] <= tol) {
        v.push(Violation::NonPositiveDiagonal { i: i + 1 });
    }
    if let Some((i, j)) = first(&|i, j| i != j && m[(i, i)] - m[(i, j)] <= tol) {
        v.push(Violation::StrictDiagonalDominance { i: i + 1, j: j + 1 });
    }
    'outer: for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            for k in 0..p {
                if k == i || k == j {
                    continue;
                }
                if m[(i, j)] < m[(i, k)].min(m[(k, j)]) - tol {
                    v.push(Violation::ThreePoint { i: i + 1, j: j + 1, k: k + 1 });
                    break 'outer;
                }
            }
        }
    }
    if Cholesky::new(m.clone()).is_none() {
        v.push(Violation::NotPositiveDefinite);
    }
    Ok(ValidationReport { violations: v })
}

/// A validated strictly ultrametric, positive definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct UltrametricMatrix {
    m: DMatrix<f64>,
}

impl UltrametricMatrix {
    pub fn new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let report = validate_ultrametric(&m, tol)?;
        if !report.is_valid() {
            return Err(Error::NotUltrametric(report));
        }
        Ok(Self { m })
    }

    pub fn from_tree(t: &Tree) -> Self {
        tree_to_matrix(t)
    }

    pub fn p(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn to_tree(&self, tol: f64) -> Result<Tree> {
        phi(&self.m, tol)
    }

    /// `P M P^T` where leaf `i` moves to position `perm[i - 1]` (1-based).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.p(), perm.len())?;
        let p = self.p();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                out[(perm[i] - 1, perm[j] - 1)] = self.m[(i, j)];
            }
        }
        Ok(Self { m: out })
    }
}

/// The dense 0/1 block matrix of a split.
pub fn basis_matrix(s: &Split) -> DMatrix<f64> {
    let p = s.p();
    DMatrix::from_fn(p, p, |i, j| if s.contains(i + 1) && s.contains(j + 1) { 1.0 } else { 0.0 })
}

pub fn tree_to_matrix(t: &Tree) -> UltrametricMatrix {
    let p = t.p();
    let mut m = DMatrix::from_element(p, p, t.root_length());
    // Fixed summation order (root, internal splits, leaves) keeps entries
    // that share a most recent common ancestor bitwise identical.
    for (s, &len) in t.internal() {
        let members = s.leaves();
        for &i in &members {
            for &j in &members {
                m[(i - 1, j - 1)] += len;
            }
        }
    }
    for (i, &l) in t.leaf_lengths().iter().enumerate() {
        m[(i, i)] += l;
    }
    UltrametricMatrix { m }
}

pub fn matrix_to_tree(m: &DMatrix<f64>, tol: f64) -> Result<Tree> {
    let report = validate_ultrametric(m, tol)?;
    if !report.is_valid() {
        return Err(Error::NotUltrametric(report));
    }
    phi(m, tol)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups `idx` (0-based, ascending) into components of `m - base > tol`,
/// ordered by smallest member.
fn components(m: &DMatrix<f64>, idx: &[usize], base: f64, tol: f64) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(idx.len());
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if m[(idx[a], idx[b])] - base > tol {
                uf.union(a, b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..idx.len() {
        let r = uf.find(a);
        groups.entry(r).or_default().push(idx[a]);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

fn block_min(m: &DMatrix<f64>, idx: &[usize]) -> f64 {
    let mut mn = f64::INFINITY;
    for &i in idx {
        for &j in idx {
            mn = mn.min(m[(i, j)]);
        }
    }
    mn
}

fn phi(m: &DMatrix<f64>, tol: f64) -> Result<Tree> {
    let p = m.nrows();
    if p == 1 {
        return Tree::new(1, [], vec![m[(0, 0)]], 0.0);
    }
    let mut internal = BTreeMap::new();
    let mut leaves = vec![0.0; p];
    let all: Vec<usize> = (0..p).collect();
    let root = block_min(m, &all);
    let mut stack: Vec<(Vec<usize>, f64)> = Vec::new();
    for c in split_block(m, &all, root, tol)? {
        stack.push((c, root));
    }
    while let Some((idx, base)) = stack.pop() {
        if idx.len() == 1 {
            leaves[idx[0]] = m[(idx[0], idx[0])] - base;
            continue;
        }
        let mn = block_min(m, &idx);
        let len = mn - base;
        if len > tol {
            let mask = idx.iter().fold(0u64, |acc, &i| acc | (1u64 << i));
            internal.insert(Split::new_unchecked(mask, p), len);
        }
        for c in split_block(m, &idx, mn, tol)? {
            stack.push((c, mn));
        }
    }
    Tree::new(p, internal, leaves, root)
}

fn split_block(m: &DMatrix<f64>, idx: &[usize], base: f64, tol: f64) -> Result<Vec<Vec<usize>>> {
    let comps = components(m, idx, base, tol);
    if comps.len() < 2 {
        return Err(invalid("block does not decompose; matrix is not strictly ultrametric"));
    }
    Ok(comps)
}

/// One level of the min-entry decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionLevel {
    /// Smallest entry of the input.
    pub alpha: f64,
    /// Blocks of 1-based indices, ordered by smallest member.
    pub blocks: Vec<Vec<usize>>,
    /// Concatenation of the blocks (1-based).
    pub permutation: Vec<usize>,
    /// One basis split per block.
    pub basis: Vec<Split>,
    /// Diagonal blocks of the permuted residual `m - alpha * J`.
    pub residuals: Vec<DMatrix<f64>>,
}

pub fn decompose_step(m: &DMatrix<f64>, tol: f64) -> Result<DecompositionLevel> {
    let report = validate_ultrametric(m, tol)?;
    if !report.is_valid() {
        return Err(Error::NotUltrametric(report));
    }
    let p = m.nrows();
    if p < 2 {
        return Err(invalid("decomposition needs p >= 2"));
    }
    let all: Vec<usize> = (0..p).collect();
    let alpha = block_min(m, &all);
    let comps = components(m, &all, alpha, tol);
    let blocks: Vec<Vec<usize>> = comps
        .iter()
        .map(|c| c.iter().map(|i| i + 1).collect())
        .collect();
    let permutation = blocks.iter().flatten().copied().collect();
    let basis = blocks
        .iter()
        .map(|b| Split::from_leaves(b, p))
        .collect::<Result<Vec<_>>>()?;
    let residuals = comps
        .iter()
        .map(|c| DMatrix::from_fn(c.len(), c.len(), |a, b| m[(c[a], c[b])] - alpha))
        .collect();
    Ok(DecompositionLevel {
        alpha,
        blocks,
        permutation,
        basis,
        residuals,
    })
}

/// Entrywise `<=` on the lower triangle including the diagonal.
pub fn vech_leq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    let p = a.nrows();
    Ok((0..p).all(|j| (j..p).all(|i| a[(i, j)] <= b[(i, j)])))
}

/// Lower triangle including the diagonal, column by column.
pub fn vech(a: &DMatrix<f64>) -> Vec<f64> {
    let p = a.nrows();
    (0..p).flat_map(|j| (j..p).map(move |i| a[(i, j)])).collect()
}
