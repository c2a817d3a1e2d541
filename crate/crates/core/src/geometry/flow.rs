//! Minimum-weight vertex cover on a bipartite graph via max-flow / min-cut.

use std::collections::VecDeque;

/// Weights are snapped to this grid so cover decisions are combinatorial.
const SCALE: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct VertexCover {
    pub left: Vec<bool>,
    pub right: Vec<bool>,
    pub weight: f64,
}

/// `edges` are `(left, right)` index pairs; weights must be non-negative.
pub fn min_weight_vertex_cover(wl: &[f64], wr: &[f64], edges: &[(usize, usize)]) -> VertexCover {
    let (nl, nr) = (wl.len(), wr.len());
    let n = nl + nr + 2;
    let (s, t) = (0, n - 1);
    let inf: i64 = i64::MAX / 4;
    let mut cap = vec![vec![0i64; n]; n];
    for (i, w) in wl.iter().enumerate() {
        cap[s][1 + i] = (w * SCALE).round() as i64;
    }
    for (j, w) in wr.iter().enumerate() {
        cap[1 + nl + j][t] = (w * SCALE).round() as i64;
    }
    for &(i, j) in edges {
        cap[1 + i][1 + nl + j] = inf;
    }
    // Edmonds-Karp on a dense residual matrix; graphs here have at most a
    // few dozen vertices.
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            break;
        }
        let mut bottleneck = inf;
        let mut v = t;
        while v != s {
            let u = prev[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
    }
    let mut reach = vec![false; n];
    reach[s] = true;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for v in 0..n {
            if !reach[v] && cap[u][v] > 0 {
                reach[v] = true;
                q.push_back(v);
            }
        }
    }
    let left: Vec<bool> = (0..nl).map(|i| !reach[1 + i]).collect();
    let right: Vec<bool> = (0..nr).map(|j| reach[1 + nl + j]).collect();
    let weight = left
        .iter()
        .zip(wl)
        .filter(|(c, _)| **c)
        .map(|(_, w)| w)
        .chain(right.iter().zip(wr).filter(|(c, _)| **c).map(|(_, w)| w))
        .sum();
    VertexCover { left, right, weight }
}
