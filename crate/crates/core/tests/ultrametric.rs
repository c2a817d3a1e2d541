mod common;

use nalgebra::{dmatrix, DMatrix};
use ultratree::rng::RngStream;
use ultratree::treespace::{resolution_candidates, Coord, Split, Tree};
use ultratree::ultrametric::{
    basis_matrix, decompose_step, validate_ultrametric, vech, vech_leq, Violation, DEFAULT_TOL,
};
use ultratree::{matrix_to_tree, tree_to_matrix, Error, UltrametricMatrix};

fn sp(leaves: &[usize], p: usize) -> Split {
    Split::from_leaves(leaves, p).unwrap()
}

fn shuffled(p: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (1..=p).collect();
    for i in (1..p).rev() {
        perm.swap(i, rng.index(i + 1));
    }
    perm
}

#[test]
fn validation_witnesses() {
    let star = dmatrix![2.0, 1.0, 1.0; 1.0, 2.0, 1.0; 1.0, 1.0, 2.0];
    assert!(validate_ultrametric(&star, 0.0).unwrap().is_valid());

    let flat = dmatrix![1.0, 1.0; 1.0, 1.0];
    let r = validate_ultrametric(&flat, DEFAULT_TOL).unwrap();
    assert!(r.violations.iter().any(|v| matches!(v, Violation::StrictDiagonalDominance { .. })));

    let m = dmatrix![3.0, 0.0, 1.0; 0.0, 3.0, 2.0; 1.0, 2.0, 3.0];
    let r = validate_ultrametric(&m, DEFAULT_TOL).unwrap();
    assert!(r.violations.contains(&Violation::ThreePoint { i: 1, j: 2, k: 3 }));
    assert!(matches!(matrix_to_tree(&m, DEFAULT_TOL), Err(Error::NotUltrametric(_))));

    let rect = DMatrix::<f64>::zeros(2, 3);
    assert!(matches!(validate_ultrametric(&rect, DEFAULT_TOL), Err(Error::Shape(_))));
    let neg = dmatrix![2.0, -1.0; -1.0, 2.0];
    let r = validate_ultrametric(&neg, DEFAULT_TOL).unwrap();
    assert!(r.violations.iter().any(|v| matches!(v, Violation::Negative { .. })));
}

#[test]
fn psi_examples() {
    let t = Tree::star(vec![1.0; 3], 1.0).unwrap();
    assert_eq!(tree_to_matrix(&t).into_inner(), dmatrix![2.0, 1.0, 1.0; 1.0, 2.0, 1.0; 1.0, 1.0, 2.0]);
    let t = Tree::star(vec![0.3, 0.7], 0.0).unwrap();
    assert_eq!(tree_to_matrix(&t).into_inner(), dmatrix![0.3, 0.0; 0.0, 0.7]);
    let t = Tree::new(4, [(sp(&[1, 2], 4), 0.5), (sp(&[1, 2, 3], 4), 0.2)], vec![1.0; 4], 0.1).unwrap();
    let m = tree_to_matrix(&t);
    assert!((m.get(0, 1) - 0.8).abs() < 1e-15);
    assert!((m.get(0, 2) - 0.3).abs() < 1e-15);
    assert!((m.get(0, 3) - 0.1).abs() < 1e-15);
}

#[test]
fn phi_examples() {
    let t = matrix_to_tree(&dmatrix![2.0, 1.0, 1.0; 1.0, 2.0, 1.0; 1.0, 1.0, 2.0], DEFAULT_TOL).unwrap();
    assert_eq!(t, Tree::star(vec![1.0; 3], 1.0).unwrap());
    let t = matrix_to_tree(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0, 3.0]), DEFAULT_TOL).unwrap();
    assert_eq!(t, Tree::star(vec![1.0, 2.0, 3.0], 0.0).unwrap());
    let t = matrix_to_tree(&dmatrix![4.5], DEFAULT_TOL).unwrap();
    assert_eq!(t.root_length(), 0.0);
    assert_eq!(t.leaf_lengths(), &[4.5]);
}

#[test]
fn decompose_levels() {
    let d = decompose_step(&DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0, 3.0, 4.0]), DEFAULT_TOL).unwrap();
    assert_eq!(d.alpha, 0.0);
    assert_eq!(d.blocks.len(), 4);

    let d = decompose_step(&dmatrix![2.0, 1.0, 1.0; 1.0, 2.0, 1.0; 1.0, 1.0, 2.0], DEFAULT_TOL).unwrap();
    assert_eq!(d.alpha, 1.0);
    assert_eq!(d.blocks, vec![vec![1], vec![2], vec![3]]);
    for r in &d.residuals {
        assert_eq!(r, &dmatrix![1.0]);
    }

    // Seven leaves below a root node whose first internal edge has zero
    // length: the top level splits into blocks of sizes 2, 2 and 3.
    let p = 7;
    let t = Tree::new(
        p,
        [
            (sp(&[1, 4], p), 0.4),
            (sp(&[2, 6], p), 0.3),
            (sp(&[3, 5, 7], p), 0.6),
            (sp(&[3, 5], p), 0.2),
        ],
        vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6],
        0.7,
    )
    .unwrap();
    let m = tree_to_matrix(&t).into_inner();
    let d = decompose_step(&m, DEFAULT_TOL).unwrap();
    assert_eq!(d.alpha, 0.7);
    assert_eq!(d.blocks, vec![vec![1, 4], vec![2, 6], vec![3, 5, 7]]);
    assert_eq!(d.permutation, vec![1, 4, 2, 6, 3, 5, 7]);
    assert_eq!(d.basis, vec![sp(&[1, 4], p), sp(&[2, 6], p), sp(&[3, 5, 7], p)]);
    assert!(matrix_to_tree(&m, DEFAULT_TOL).unwrap().approx_eq(&t, 1e-12));
}

#[test]
fn bijection_round_trips() {
    let mut rng = RngStream::new(99, 4);
    for _ in 0..3000 {
        let p = 2 + rng.index(15);
        let t = common::random_any(p, &mut rng);
        let m = tree_to_matrix(&t);
        assert_eq!(m.matrix(), &common::path_sum_matrix(&t));
        assert!(validate_ultrametric(m.matrix(), DEFAULT_TOL).unwrap().is_valid());
        assert!(m.matrix().clone().cholesky().is_some());
        let back = matrix_to_tree(m.matrix(), DEFAULT_TOL).unwrap();
        assert_eq!(back.topology(), t.topology());
        assert!(back.approx_eq(&t, 1e-12));
        let again = tree_to_matrix(&back);
        assert!((again.matrix() - m.matrix()).amax() < 1e-10);
    }
}

#[test]
fn phi_commutes_with_relabeling() {
    let mut rng = RngStream::new(3, 3);
    for _ in 0..500 {
        let p = 2 + rng.index(12);
        let t = common::random_any(p, &mut rng);
        let perm = shuffled(p, &mut rng);
        let m = UltrametricMatrix::from_tree(&t).permuted(&perm).unwrap();
        let lhs = matrix_to_tree(m.matrix(), DEFAULT_TOL).unwrap();
        assert!(lhs.approx_eq(&t.relabel(&perm).unwrap(), 1e-12));
    }
}

#[test]
fn shrinking_any_length_is_monotone() {
    let mut rng = RngStream::new(8, 1);
    for _ in 0..500 {
        let p = 2 + rng.index(10);
        let t = common::random_any(p, &mut rng);
        let m = tree_to_matrix(&t).into_inner();
        for c in t.coords() {
            let mut s = t.clone();
            s.set(c, t.get(c) * rng.uniform()).unwrap();
            let ms = tree_to_matrix(&s).into_inner();
            assert!(vech_leq(&ms, &m).unwrap());
            if let Coord::Internal(split) = c {
                let delta = t.get(c) - s.get(c);
                let expect = &m - basis_matrix(&split) * delta;
                assert!((ms - expect).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn boundary_is_dominated_by_every_resolution() {
    let p = 4;
    let t = Tree::new(p, [(sp(&[1, 2], p), 0.5), (sp(&[3, 4], p), 0.3)], vec![1.0; 4], 0.2).unwrap();
    let removed = sp(&[3, 4], p);
    let boundary = t.without_splits(&[removed]);
    let mb = tree_to_matrix(&boundary).into_inner();
    let cands = resolution_candidates(&t.topology(), &removed).unwrap();
    assert_eq!(cands.len(), 3);
    for c in cands {
        let ext = Tree::new(p, [(sp(&[1, 2], p), 0.5), (c, 0.05)], vec![1.0; 4], 0.2).unwrap();
        assert!(vech_leq(&mb, &tree_to_matrix(&ext).into_inner()).unwrap());
    }
    assert!(vech_leq(&mb, &mb).unwrap());
    assert!(vech_leq(&mb, &DMatrix::zeros(3, 3)).is_err());
}

#[test]
fn vech_orders_lower_triangle_by_column() {
    let m = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 5.0; 3.0, 5.0, 6.0];
    assert_eq!(vech(&m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}
