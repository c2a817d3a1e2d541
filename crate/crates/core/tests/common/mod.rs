//! Independent test-side oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ultratree::rng::RngStream;
use ultratree::treespace::{collapse_uniform, random_tree, split_compatible, RandomTreeMode, Split, Tree};

/// Random tree with `drop` internal splits removed (capped by availability).
pub fn random_unresolved(p: usize, drop: usize, rng: &mut RngStream) -> Tree {
    let t = random_tree(p, RandomTreeMode::UniformBinary, 1.0, rng).unwrap();
    let m = drop.min(t.internal().len());
    collapse_uniform(&t, m, rng).unwrap()
}

/// Random tree over p leaves, resolved half the time.
pub fn random_any(p: usize, rng: &mut RngStream) -> Tree {
    if rng.uniform() < 0.5 {
        random_tree(p, RandomTreeMode::UniformBinary, 1.0, rng).unwrap()
    } else {
        let k = p.saturating_sub(2);
        let drop = if k == 0 { 0 } else { rng.index(k + 1) };
        random_unresolved(p, drop, rng)
    }
}

/// Entry (i, j) as the explicit root-to-MRCA path sum.
pub fn path_sum_matrix(t: &Tree) -> DMatrix<f64> {
    let p = t.p();
    DMatrix::from_fn(p, p, |i, j| {
        let mut v = t.root_length();
        for (s, len) in t.internal() {
            if s.contains(i + 1) && s.contains(j + 1) {
                v += len;
            }
        }
        if i == j {
            v += t.leaf_lengths()[i];
        }
        v
    })
}

#[derive(Clone, Copy)]
struct Item {
    split: Split,
    len: f64,
    source: bool,
}

fn ordered_partitions(n: usize) -> Vec<Vec<u32>> {
    fn rec(remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(cur.clone());
            return;
        }
        let mut sub = remaining;
        while sub != 0 {
            cur.push(sub);
            rec(remaining & !sub, cur, out);
            cur.pop();
            sub = (sub - 1) & remaining;
        }
    }
    let mut out = Vec::new();
    rec((1u32 << n) - 1, &mut Vec::new(), &mut out);
    out
}

/// BHV distance by exhaustive search over ordered support sequences whose
/// intermediate orthants are valid and whose ratios are non-decreasing.
pub fn brute_force_bhv(t1: &Tree, t2: &Tree) -> f64 {
    let mut common2 = 0.0;
    let mut items = Vec::new();
    for (s, &v) in t1.internal() {
        match t2.internal().get(s) {
            Some(&w) => common2 += (v - w).powi(2),
            None => items.push(Item { split: *s, len: v, source: true }),
        }
    }
    for (s, &w) in t2.internal() {
        if !t1.has_split(s) {
            items.push(Item { split: *s, len: w, source: false });
        }
    }
    if items.is_empty() {
        return common2.sqrt();
    }
    let mut best = f64::INFINITY;
    for blocks in ordered_partitions(items.len()) {
        let members = |b: u32, src: bool| -> Vec<Item> {
            (0..items.len())
                .filter(|i| b & (1 << i) != 0 && items[*i].source == src)
                .map(|i| items[i])
                .collect()
        };
        let norm = |xs: &[Item]| xs.iter().map(|x| x.len * x.len).sum::<f64>().sqrt();
        let mut ok = true;
        'compat: for k in 0..blocks.len() {
            for l in k + 1..blocks.len() {
                for b in members(blocks[k], false) {
                    for a in members(blocks[l], true) {
                        if !split_compatible(&a.split, &b.split).unwrap() {
                            ok = false;
                            break 'compat;
                        }
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let ratios: Vec<f64> = blocks
            .iter()
            .map(|&b| {
                let (a, bb) = (norm(&members(b, true)), norm(&members(b, false)));
                if bb == 0.0 { f64::INFINITY } else { a / bb }
            })
            .collect();
        if ratios.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let total: f64 = blocks
            .iter()
            .map(|&b| (norm(&members(b, true)) + norm(&members(b, false))).powi(2))
            .sum();
        best = best.min((common2 + total).sqrt());
    }
    best
}
