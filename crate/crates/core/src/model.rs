//! Mean-zero Gaussian likelihood for a tree-structured covariance, its
//! gradient in the edge lengths, and synthetic data generation.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::RngStream;
use crate::treespace::{Coord, Tree};
use crate::ultrametric::tree_to_matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum Distribution {
    Normal,
    /// Multivariate t with `df` degrees of freedom.
    T { df: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    /// `n x p`, one observation per row.
    pub rows: DMatrix<f64>,
    pub distribution: Distribution,
}

impl DataSet {
    pub fn new(rows: DMatrix<f64>, distribution: Distribution) -> Result<Self> {
        if rows.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("data contain non-finite entries".into()));
        }
        Ok(Self { rows, distribution })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }
}

/// Sample count and scatter matrix `S = sum_i x_i x_i^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    n: usize,
    scatter: DMatrix<f64>,
}

impl SufficientStats {
    pub fn new(n: usize, scatter: DMatrix<f64>) -> Result<Self> {
        if scatter.nrows() != scatter.ncols() {
            return Err(Error::Shape("scatter matrix must be square".into()));
        }
        if scatter.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("scatter matrix has non-finite entries".into()));
        }
        Ok(Self { n, scatter })
    }

    /// No observations; the likelihood is identically zero.
    pub fn empty(p: usize) -> Self {
        Self {
            n: 0,
            scatter: DMatrix::zeros(p, p),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.scatter.nrows()
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }
}

pub fn suff_stats(data: &DataSet) -> Result<SufficientStats> {
    if data.n() == 0 {
        return Err(Error::Data("no observations".into()));
    }
    if data.rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("data contain non-finite entries".into()));
    }
    let p = data.p();
    let mut s = DMatrix::zeros(p, p);
    // Neumaier-compensated accumulation per entry.
    for i in 0..p {
        for j in 0..=i {
            let mut sum = 0.0f64;
            let mut c = 0.0f64;
            for r in 0..data.n() {
                let x = data.rows[(r, i)] * data.rows[(r, j)];
                let t = sum + x;
                if sum.abs() >= x.abs() {
                    c += (sum - t) + x;
                } else {
                    c += (x - t) + sum;
                }
                sum = t;
            }
            s[(i, j)] = sum + c;
            s[(j, i)] = sum + c;
        }
    }
    Ok(SufficientStats {
        n: data.n(),
        scatter: s,
    })
}

fn factor(m: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)
}

fn log_det(ch: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

pub fn gaussian_loglik(stats: &SufficientStats, m: &DMatrix<f64>) -> Result<f64> {
    check_dim(stats.p(), m.nrows())?;
    let ch = factor(m)?;
    if stats.n == 0 {
        return Ok(0.0);
    }
    let inv = ch.inverse();
    let n = stats.n as f64;
    let p = stats.p() as f64;
    let tr = inv.component_mul(&stats.scatter).sum();
    Ok(-0.5 * n * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * n * log_det(&ch) - 0.5 * tr)
}

pub fn tree_loglik(stats: &SufficientStats, t: &Tree) -> Result<f64> {
    gaussian_loglik(stats, tree_to_matrix(t).matrix())
}

fn block_sum(m: &DMatrix<f64>, members: &[usize]) -> f64 {
    let mut s = 0.0;
    for &i in members {
        for &j in members {
            s += m[(i - 1, j - 1)];
        }
    }
    s
}

/// Log-likelihood and its partial derivative in every stored coordinate:
/// `d/dd_A = -(n/2) b_A^T W b_A + (1/2) b_A^T W S W b_A` with `W = Sigma^-1`.
pub fn loglik_and_gradient(stats: &SufficientStats, t: &Tree) -> Result<(f64, BTreeMap<Coord, f64>)> {
    check_dim(stats.p(), t.p())?;
    let m = tree_to_matrix(t).into_inner();
    let ch = factor(&m)?;
    let p = t.p();
    let mut grad = BTreeMap::new();
    if stats.n == 0 {
        for c in t.coords() {
            grad.insert(c, 0.0);
        }
        return Ok((0.0, grad));
    }
    let w = ch.inverse();
    let ws = &w * &stats.scatter;
    let wsw = &ws * &w;
    let n = stats.n as f64;
    let ll = -0.5 * n * p as f64 * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * n * log_det(&ch)
        - 0.5 * ws.trace();
    for c in t.coords() {
        let members = c.leaves(p);
        let g = -0.5 * n * block_sum(&w, &members) + 0.5 * block_sum(&wsw, &members);
        grad.insert(c, g);
    }
    Ok((ll, grad))
}

pub fn loglik_gradient(stats: &SufficientStats, t: &Tree) -> Result<BTreeMap<Coord, f64>> {
    Ok(loglik_and_gradient(stats, t)?.1)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    Ok(())
}

fn normal_vector(p: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(p, |_, _| StandardNormal.sample(rng))
}

pub fn sample_gaussian(m: &DMatrix<f64>, n: usize, rng: &mut RngStream) -> Result<DataSet> {
    check_n(n)?;
    let l = factor(m)?.l();
    let p = m.nrows();
    let mut rows = DMatrix::zeros(n, p);
    for r in 0..n {
        let x = &l * normal_vector(p, rng);
        rows.row_mut(r).copy_from(&x.transpose());
    }
    DataSet::new(rows, Distribution::Normal)
}

pub fn sample_t(m: &DMatrix<f64>, df: u32, n: usize, rng: &mut RngStream) -> Result<DataSet> {
    check_n(n)?;
    if !(3..=64).contains(&df) {
        return Err(invalid(format!("degrees of freedom must lie in 3..=64, got {df}")));
    }
    let l = factor(m)?.l();
    let p = m.nrows();
    let mut rows = DMatrix::zeros(n, p);
    for r in 0..n {
        let z = &l * normal_vector(p, rng);
        let w: f64 = (0..df)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                e * e
            })
            .sum();
        let x = z * (df as f64 / w).sqrt();
        rows.row_mut(r).copy_from(&x.transpose());
    }
    DataSet::new(rows, Distribution::T { df })
}

pub fn sample_data(m: &DMatrix<f64>, dist: Distribution, n: usize, rng: &mut RngStream) -> Result<DataSet> {
    match dist {
        Distribution::Normal => sample_gaussian(m, n, rng),
        Distribution::T { df } => sample_t(m, df, n, rng),
    }
}
