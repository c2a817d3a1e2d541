mod common;

use nalgebra::{DMatrix, DVector};
use ultratree::model::{
    gaussian_loglik, loglik_gradient, sample_gaussian, sample_t, suff_stats, tree_loglik, DataSet, Distribution,
    SufficientStats,
};
use ultratree::rng::RngStream;
use ultratree::treespace::{Coord, Tree};
use ultratree::{tree_to_matrix, Error, UltrametricMatrix};

fn random_data(n: usize, p: usize, rng: &mut RngStream) -> DataSet {
    let rows = DMatrix::from_fn(n, p, |_, _| 4.0 * rng.uniform() - 2.0);
    DataSet::new(rows, Distribution::Normal).unwrap()
}

// Lengths bounded away from zero so central differences stay inside the
// orthant.
fn padded_tree(p: usize, rng: &mut RngStream) -> Tree {
    let mut t = common::random_any(p, rng);
    for c in t.coords() {
        t.set(c, t.get(c) + 0.05).unwrap();
    }
    t
}

fn naive_scatter(d: &DataSet) -> DMatrix<f64> {
    let p = d.p();
    let mut s = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            for r in 0..d.n() {
                s[(i, j)] += d.rows[(r, i)] * d.rows[(r, j)];
            }
        }
    }
    s
}

fn naive_loglik(d: &DataSet, m: &DMatrix<f64>) -> f64 {
    let p = d.p() as f64;
    let inv = m.clone().lu().try_inverse().unwrap();
    let logdet = m.clone().lu().determinant().ln();
    let mut total = 0.0;
    for r in 0..d.n() {
        let x: DVector<f64> = d.rows.row(r).transpose();
        total += -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * (x.transpose() * &inv * &x)[0];
    }
    total
}

fn indicator(c: Coord, p: usize) -> DVector<f64> {
    let members = c.leaves(p);
    DVector::from_fn(p, |i, _| if members.contains(&(i + 1)) { 1.0 } else { 0.0 })
}

#[test]
fn scatter_matches_double_loop() {
    let mut rng = RngStream::new(1, 1);
    for _ in 0..50 {
        let d = random_data(1 + rng.index(200), 1 + rng.index(10), &mut rng);
        let s = suff_stats(&d).unwrap();
        let oracle = naive_scatter(&d);
        assert_eq!(s.n(), d.n());
        assert!((s.scatter() - &oracle).amax() <= 1e-12 * oracle.amax());
        assert_eq!(suff_stats(&d).unwrap(), s);
    }
    let one = DataSet::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), Distribution::Normal).unwrap();
    assert_eq!(suff_stats(&one).unwrap().scatter(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let x = [0.5, -1.5, 2.0];
    let twice = DataSet::new(DMatrix::from_row_slice(2, 3, &[x, x].concat()), Distribution::Normal).unwrap();
    let xv = DVector::from_row_slice(&x);
    assert_eq!(suff_stats(&twice).unwrap().scatter(), &(&xv * xv.transpose() * 2.0));
    assert!(matches!(
        DataSet::new(DMatrix::from_element(1, 1, f64::NAN), Distribution::Normal),
        Err(Error::Data(_))
    ));
}

#[test]
fn loglik_closed_forms_and_naive_oracle() {
    let one = DataSet::new(DMatrix::zeros(1, 1), Distribution::Normal).unwrap();
    let ll = gaussian_loglik(&suff_stats(&one).unwrap(), &DMatrix::identity(1, 1)).unwrap();
    assert!((ll + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    let d = DataSet::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), Distribution::Normal).unwrap();
    let ll = gaussian_loglik(&suff_stats(&d).unwrap(), &DMatrix::identity(2, 2)).unwrap();
    assert!((ll + (2.0 * std::f64::consts::PI).ln() + 1.0).abs() < 1e-14);

    let mut rng = RngStream::new(2, 2);
    for _ in 0..100 {
        let p = 1 + rng.index(10);
        let t = if p == 1 { Tree::star(vec![0.5 + rng.uniform()], rng.uniform()).unwrap() } else { padded_tree(p, &mut rng) };
        let d = random_data(1 + rng.index(100), p, &mut rng);
        let m = tree_to_matrix(&t).into_inner();
        let stats = suff_stats(&d).unwrap();
        let ll = gaussian_loglik(&stats, &m).unwrap();
        let oracle = naive_loglik(&d, &m);
        assert!((ll - oracle).abs() <= 1e-10 * oracle.abs());
        assert_eq!(tree_loglik(&stats, &t).unwrap(), ll);
    }
    let stats = SufficientStats::new(3, DMatrix::identity(2, 2)).unwrap();
    assert!(matches!(
        gaussian_loglik(&stats, &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
        Err(Error::NotPositiveDefinite)
    ));
    assert!(gaussian_loglik(&stats, &DMatrix::identity(3, 3)).is_err());
}

#[test]
fn loglik_is_permutation_invariant() {
    let mut rng = RngStream::new(3, 3);
    for _ in 0..100 {
        let p = 2 + rng.index(9);
        let t = padded_tree(p, &mut rng);
        let d = random_data(20, p, &mut rng);
        let mut perm: Vec<usize> = (1..=p).collect();
        for i in (1..p).rev() {
            perm.swap(i, rng.index(i + 1));
        }
        let mut rows = DMatrix::zeros(d.n(), p);
        for j in 0..p {
            rows.set_column(perm[j] - 1, &d.rows.column(j));
        }
        let dp = DataSet::new(rows, Distribution::Normal).unwrap();
        let m = UltrametricMatrix::from_tree(&t);
        let a = gaussian_loglik(&suff_stats(&d).unwrap(), m.matrix()).unwrap();
        let b = gaussian_loglik(&suff_stats(&dp).unwrap(), m.permuted(&perm).unwrap().matrix()).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = RngStream::new(4, 4);
    let h = 1e-6;
    for _ in 0..100 {
        let p = 2 + rng.index(9);
        let t = padded_tree(p, &mut rng);
        let d = random_data(5 + rng.index(50), p, &mut rng);
        let stats = suff_stats(&d).unwrap();
        let g = loglik_gradient(&stats, &t).unwrap();
        assert_eq!(g.keys().copied().collect::<Vec<_>>(), t.coords());
        for c in t.coords() {
            let (mut up, mut dn) = (t.clone(), t.clone());
            up.set(c, t.get(c) + h).unwrap();
            dn.set(c, t.get(c) - h).unwrap();
            let fd = (tree_loglik(&stats, &up).unwrap() - tree_loglik(&stats, &dn).unwrap()) / (2.0 * h);
            assert!((g[&c] - fd).abs() <= 1e-5 * g[&c].abs().max(1.0), "{c}: {} vs {fd}", g[&c]);
        }
    }
}

#[test]
fn gradient_matches_rank_one_removal_form() {
    // Writing Sigma = Sigma_-j + d_j v v^T, the derivative is
    // -(n/2) beta / (1 + d beta) + (1/2) sum_i (x_i^T Sigma_-j^-1 v)^2 / (1 + d beta)^2
    // with beta = v^T Sigma_-j^-1 v = b / (1 - d b), b = v^T Sigma^-1 v.
    let mut rng = RngStream::new(5, 5);
    for _ in 0..100 {
        let p = 2 + rng.index(9);
        let t = padded_tree(p, &mut rng);
        let d = random_data(5 + rng.index(50), p, &mut rng);
        let stats = suff_stats(&d).unwrap();
        let g = loglik_gradient(&stats, &t).unwrap();
        let m = tree_to_matrix(&t).into_inner();
        let inv = m.clone().lu().try_inverse().unwrap();
        let n = d.n() as f64;
        for c in t.coords() {
            let v = indicator(c, p);
            let dj = t.get(c);
            let iv = &inv * &v;
            let b = v.dot(&iv);
            let beta = b / (1.0 - dj * b);
            let removed_inv = &inv + &iv * iv.transpose() * (dj / (1.0 - dj * b));
            let u = &removed_inv * &v;
            let k = 1.0 + dj * beta;
            let quad: f64 = (0..d.n())
                .map(|r| {
                    let x: DVector<f64> = d.rows.row(r).transpose();
                    x.dot(&u).powi(2)
                })
                .sum();
            let oracle = -0.5 * n * beta / k + 0.5 * quad / (k * k);
            assert!((g[&c] - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{c}: {} vs {oracle}", g[&c]);
        }
    }
}

#[test]
fn root_gradient_is_the_all_ones_rule() {
    let mut rng = RngStream::new(6, 6);
    for _ in 0..50 {
        let p = 2 + rng.index(9);
        let t = padded_tree(p, &mut rng);
        let d = random_data(30, p, &mut rng);
        let stats = suff_stats(&d).unwrap();
        let g = loglik_gradient(&stats, &t).unwrap();
        let w = tree_to_matrix(&t).into_inner().cholesky().unwrap().inverse();
        let ones = DVector::from_element(p, 1.0);
        let wo = &w * &ones;
        let want = -0.5 * d.n() as f64 * ones.dot(&wo) + 0.5 * (stats.scatter() * &wo).dot(&wo);
        assert!((g[&Coord::Root] - want).abs() <= 1e-10 * want.abs().max(1.0));
    }
    let stats = SufficientStats::new(1, DMatrix::from_element(1, 1, 0.7f64.powi(2))).unwrap();
    let t = Tree::star(vec![1.25], 0.25).unwrap();
    let g = loglik_gradient(&stats, &t).unwrap();
    let want = -1.0 / (2.0 * 1.5) + 0.49 / (2.0 * 1.5 * 1.5);
    assert!((g[&Coord::Root] - want).abs() < 1e-14);
    assert!((g[&Coord::Leaf(1)] - want).abs() < 1e-14);
}

fn sample_cov(d: &DataSet) -> DMatrix<f64> {
    suff_stats(d).unwrap().scatter() / d.n() as f64
}

fn fixed_matrix() -> DMatrix<f64> {
    let s = ultratree::Split::from_leaves(&[1, 2], 4).unwrap();
    let t = Tree::new(4, [(s, 0.4)], vec![0.6, 0.5, 0.8, 0.7], 0.3).unwrap();
    tree_to_matrix(&t).into_inner()
}

#[test]
fn gaussian_draws_have_the_target_covariance() {
    let m = fixed_matrix();
    let d = sample_gaussian(&m, 1_000_000, &mut RngStream::new(7, 0)).unwrap();
    assert!((sample_cov(&d) - &m).amax() < 0.01);
    let again = sample_gaussian(&m, 100, &mut RngStream::new(7, 0)).unwrap();
    assert_eq!(again.rows, d.rows.rows(0, 100));
    assert!(sample_gaussian(&m, 0, &mut RngStream::new(7, 0)).is_err());
}

#[test]
fn t_draws_scale_and_tails() {
    let m = fixed_matrix();
    let d = sample_t(&m, 4, 1_000_000, &mut RngStream::new(8, 0)).unwrap();
    assert!((sample_cov(&d) - &m * 2.0).amax() < 0.05);
    assert_eq!(d.distribution, Distribution::T { df: 4 });

    let d = sample_t(&m, 3, 200_000, &mut RngStream::new(9, 0)).unwrap();
    for j in 0..4 {
        let col = d.rows.column(j);
        let n = col.len() as f64;
        let m2 = col.iter().map(|x| x * x).sum::<f64>() / n;
        let m4 = col.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        assert!(m4 / (m2 * m2) > 3.0);
    }
    let a = sample_t(&m, 3, 50, &mut RngStream::new(9, 1)).unwrap();
    let b = sample_t(&m, 3, 50, &mut RngStream::new(9, 1)).unwrap();
    assert_eq!(a, b);
    assert!(sample_t(&m, 2, 5, &mut RngStream::new(9, 1)).is_err());
}
