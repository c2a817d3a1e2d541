//! Geodesics between trees in BHV space via successive vertex-cover
//! refinement of a support sequence, starting from the cone path.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{check_dim, invalid, Result};
use crate::treespace::split::compatible;
use crate::treespace::{Split, Tree};

use super::flow::min_weight_vertex_cover;

/// A split whose length moves linearly along the geodesic. Splits present
/// in only one tree but compatible with every split of the other tree are
/// listed here with length zero on the missing side.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommonSplit {
    pub split: Split,
    pub source: f64,
    pub target: f64,
}

/// Source-only splits `A_i` that shrink to zero before the target-only
/// splits `B_i` grow from zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportPair {
    pub source: Vec<(Split, f64)>,
    pub target: Vec<(Split, f64)>,
}

fn norm(xs: &[(Split, f64)]) -> f64 {
    xs.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
}

impl SupportPair {
    pub fn source_norm(&self) -> f64 {
        norm(&self.source)
    }

    pub fn target_norm(&self) -> f64 {
        norm(&self.target)
    }

    /// Fraction of the path at which this pair passes through zero.
    pub fn switch_time(&self) -> f64 {
        let (a, b) = (self.source_norm(), self.target_norm());
        a / (a + b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GeodesicSupport {
    pub common: Vec<CommonSplit>,
    pub pairs: Vec<SupportPair>,
}

impl GeodesicSupport {
    pub fn length(&self) -> f64 {
        // Summing sorted terms makes the result bitwise symmetric in the
        // two endpoints.
        let mut terms: Vec<f64> = self
            .common
            .iter()
            .map(|c| (c.source - c.target).powi(2))
            .chain(self.pairs.iter().map(|p| (p.source_norm() + p.target_norm()).powi(2)))
            .collect();
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>().sqrt()
    }
}

/// Cover weight must fall this far below one before a pair is split.
const IMPROVEMENT_MARGIN: f64 = 1e-10;

fn refine(pair: &SupportPair) -> Option<(SupportPair, SupportPair)> {
    let (na2, nb2) = (pair.source_norm().powi(2), pair.target_norm().powi(2));
    let wl: Vec<f64> = pair.source.iter().map(|(_, v)| v * v / na2).collect();
    let wr: Vec<f64> = pair.target.iter().map(|(_, v)| v * v / nb2).collect();
    let mut edges = Vec::new();
    for (i, (a, _)) in pair.source.iter().enumerate() {
        for (j, (b, _)) in pair.target.iter().enumerate() {
            if !compatible(a, b) {
                edges.push((i, j));
            }
        }
    }
    let cover = min_weight_vertex_cover(&wl, &wr, &edges);
    if cover.weight >= 1.0 - IMPROVEMENT_MARGIN {
        return None;
    }
    let pick = |xs: &[(Split, f64)], mask: &[bool], keep: bool| -> Vec<(Split, f64)> {
        xs.iter()
            .zip(mask)
            .filter(|(_, &c)| c == keep)
            .map(|(x, _)| *x)
            .collect()
    };
    let first = SupportPair {
        source: pick(&pair.source, &cover.left, true),
        target: pick(&pair.target, &cover.right, false),
    };
    let second = SupportPair {
        source: pick(&pair.source, &cover.left, false),
        target: pick(&pair.target, &cover.right, true),
    };
    if [&first.source, &first.target, &second.source, &second.target]
        .iter()
        .any(|v| v.is_empty())
    {
        return None;
    }
    Some((first, second))
}

/// Geodesic support between the internal parts of two trees.
pub fn geodesic_support(t1: &Tree, t2: &Tree) -> Result<GeodesicSupport> {
    check_dim(t1.p(), t2.p())?;
    let mut common = Vec::new();
    let mut a_only = Vec::new();
    let mut b_only = Vec::new();
    for (s, &v) in t1.internal() {
        match t2.internal().get(s) {
            Some(&w) => common.push(CommonSplit {
                split: *s,
                source: v,
                target: w,
            }),
            None => a_only.push((*s, v)),
        }
    }
    for (s, &w) in t2.internal() {
        if !t1.has_split(s) {
            b_only.push((*s, w));
        }
    }
    let free_a: Vec<bool> = a_only
        .iter()
        .map(|(a, _)| b_only.iter().all(|(b, _)| compatible(a, b)))
        .collect();
    let free_b: Vec<bool> = b_only
        .iter()
        .map(|(b, _)| a_only.iter().all(|(a, _)| compatible(a, b)))
        .collect();
    let mut rest_a = Vec::new();
    let mut rest_b = Vec::new();
    for ((s, v), free) in a_only.into_iter().zip(free_a) {
        if free {
            common.push(CommonSplit {
                split: s,
                source: v,
                target: 0.0,
            });
        } else {
            rest_a.push((s, v));
        }
    }
    for ((s, w), free) in b_only.into_iter().zip(free_b) {
        if free {
            common.push(CommonSplit {
                split: s,
                source: 0.0,
                target: w,
            });
        } else {
            rest_b.push((s, w));
        }
    }
    common.sort_by_key(|c| c.split);
    let mut pairs = Vec::new();
    if !rest_a.is_empty() {
        debug_assert!(!rest_b.is_empty());
        pairs.push(SupportPair {
            source: rest_a,
            target: rest_b,
        });
    }
    let mut i = 0;
    while i < pairs.len() {
        match refine(&pairs[i]) {
            Some((first, second)) => {
                pairs[i] = first;
                pairs.insert(i + 1, second);
            }
            None => i += 1,
        }
    }
    Ok(GeodesicSupport { common, pairs })
}

/// BHV distance over internal splits, with the support that realises it.
pub fn bhv_distance(t1: &Tree, t2: &Tree) -> Result<(f64, GeodesicSupport)> {
    let support = geodesic_support(t1, t2)?;
    Ok((support.length(), support))
}

/// Point at fraction `s` along the geodesic from `t1` to `t2`; leaf and
/// root coordinates move linearly.
pub fn geodesic_point(t1: &Tree, t2: &Tree, s: f64) -> Result<Tree> {
    let support = geodesic_support(t1, t2)?;
    geodesic_point_with(t1, t2, &support, s)
}

pub fn geodesic_point_with(t1: &Tree, t2: &Tree, support: &GeodesicSupport, s: f64) -> Result<Tree> {
    check_dim(t1.p(), t2.p())?;
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid(format!("geodesic parameter must lie in [0, 1], got {s}")));
    }
    if s == 0.0 {
        return Ok(t1.clone());
    }
    if s == 1.0 {
        return Ok(t2.clone());
    }
    let lerp = |x: f64, y: f64| (1.0 - s) * x + s * y;
    let mut internal = BTreeMap::new();
    for c in &support.common {
        let v = lerp(c.source, c.target);
        if v > 0.0 {
            internal.insert(c.split, v);
        }
    }
    for pair in &support.pairs {
        let (na, nb) = (pair.source_norm(), pair.target_norm());
        let pivot = s * (na + nb);
        if pivot < na {
            let f = (na - pivot) / na;
            for (sp, v) in &pair.source {
                internal.insert(*sp, v * f);
            }
        } else if pivot > na {
            let f = (pivot - na) / nb;
            for (sp, v) in &pair.target {
                internal.insert(*sp, v * f);
            }
        }
    }
    internal.retain(|_, v| *v > 0.0);
    let leaves = t1
        .leaf_lengths()
        .iter()
        .zip(t2.leaf_lengths())
        .map(|(x, y)| lerp(*x, *y))
        .collect();
    let root = lerp(t1.root_length(), t2.root_length()).max(0.0);
    Ok(Tree::from_parts_unchecked(t1.p(), internal, leaves, root))
}
