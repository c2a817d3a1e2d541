use std::collections::BTreeSet;

use crate::error::{check_dim, invalid, Result};

use super::split::{compatible, full_mask, Split, MAX_LEAVES};

/// Largest polytomy whose resolutions are enumerated explicitly.
pub const MAX_POLYTOMY: usize = 20;

/// The internal splits of a rooted tree on leaves `{1..p}`, kept sorted in
/// canonical (ascending bitmask) order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topology {
    p: usize,
    splits: Vec<Split>,
}

/// One node of the rooted hierarchy: the leaf block below it and the blocks
/// of its immediate children (maximal sub-blocks and uncovered leaves).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fragmentation {
    pub block: Split,
    pub children: Vec<Split>,
}

impl Topology {
    pub fn new<I>(p: usize, splits: I) -> Result<Self>
    where
        I: IntoIterator<Item = Split>,
    {
        if p == 0 || p > MAX_LEAVES {
            return Err(invalid(format!("leaf count {p} outside 1..={MAX_LEAVES}")));
        }
        let set: BTreeSet<Split> = splits.into_iter().collect();
        for s in &set {
            check_dim(p, s.p())?;
            if !s.is_internal() {
                return Err(invalid(format!("{s} is not an internal split for p={p}")));
            }
        }
        let splits: Vec<Split> = set.into_iter().collect();
        for (i, a) in splits.iter().enumerate() {
            for b in &splits[i + 1..] {
                if !compatible(a, b) {
                    return Err(invalid(format!("splits {a} and {b} are incompatible")));
                }
            }
        }
        Ok(Self { p, splits })
    }

    pub(crate) fn from_sorted_unchecked(p: usize, splits: Vec<Split>) -> Self {
        debug_assert!(splits.windows(2).all(|w| w[0] < w[1]));
        Self { p, splits }
    }

    pub fn star(p: usize) -> Result<Self> {
        Self::new(p, [])
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn is_resolved(&self) -> bool {
        self.p < 2 || self.splits.len() == self.p - 2
    }

    pub fn contains(&self, s: &Split) -> bool {
        self.splits.binary_search(s).is_ok()
    }

    pub fn without(&self, s: &Split) -> Topology {
        let splits = self.splits.iter().copied().filter(|x| x != s).collect();
        Self::from_sorted_unchecked(self.p, splits)
    }

    /// Every node of the hierarchy (root block plus each internal split),
    /// ordered by block, with children ordered by smallest leaf.
    pub fn fragmentations(&self) -> Vec<Fragmentation> {
        let p = self.p;
        let root = Split::new_unchecked(full_mask(p), p);
        let mut blocks: Vec<Split> = self.splits.clone();
        blocks.push(root);
        let mut out = Vec::with_capacity(blocks.len());
        for &block in &blocks {
            let mut children: Vec<Split> = Vec::new();
            let mut covered = 0u64;
            // Maximal proper sub-blocks: every split strictly inside `block`
            // not strictly inside another such split.
            let inner: Vec<Split> = self
                .splits
                .iter()
                .copied()
                .filter(|s| *s != block && s.is_subset_of(&block))
                .collect();
            for s in &inner {
                let dominated = inner
                    .iter()
                    .any(|t| t != s && s.is_subset_of(t));
                if !dominated {
                    children.push(*s);
                    covered |= s.mask();
                }
            }
            let mut rest = block.mask() & !covered;
            while rest != 0 {
                let bit = rest & rest.wrapping_neg();
                children.push(Split::new_unchecked(bit, p));
                rest &= !bit;
            }
            children.sort_by_key(|c| c.min_leaf());
            out.push(Fragmentation { block, children });
        }
        out
    }
}

/// Splits that can be added to `topology ∖ {removed}` while keeping the set
/// compatible: `removed` itself first, then the alternatives in canonical
/// order.
pub fn resolution_candidates(topology: &Topology, removed: &Split) -> Result<Vec<Split>> {
    if !topology.contains(removed) {
        return Err(invalid(format!("{removed} is not in the topology")));
    }
    let rest = topology.without(removed);
    let p = topology.p();
    let mut out = Vec::new();
    for node in rest.fragmentations() {
        let m = node.children.len();
        if m < 3 {
            continue;
        }
        if m > MAX_POLYTOMY {
            return Err(invalid(format!(
                "polytomy of degree {m} exceeds the enumeration limit {MAX_POLYTOMY}"
            )));
        }
        let full = (1u32 << m) - 1;
        for sel in 1..full {
            let k = sel.count_ones() as usize;
            if k < 2 || k > m - 1 {
                continue;
            }
            let mut mask = 0u64;
            for (i, c) in node.children.iter().enumerate() {
                if sel & (1 << i) != 0 {
                    mask |= c.mask();
                }
            }
            out.push(Split::new_unchecked(mask, p));
        }
    }
    out.sort();
    out.dedup();
    // The removed split leads, followed by the alternatives.
    if let Some(pos) = out.iter().position(|s| s == removed) {
        out.remove(pos);
    }
    out.insert(0, *removed);
    Ok(out)
}

fn internal_splits(p: usize) -> Vec<Split> {
    let full = full_mask(p);
    (1..full)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| Split::new_unchecked(m, p))
        .collect()
}

fn extend_compatible(
    all: &[Split],
    start: usize,
    current: &mut Vec<Split>,
    out: &mut Vec<Vec<Split>>,
) {
    out.push(current.clone());
    for i in start..all.len() {
        let s = all[i];
        if current.iter().all(|c| compatible(c, &s)) {
            current.push(s);
            extend_compatible(all, i + 1, current, out);
            current.pop();
        }
    }
}

/// Every topology on `p` leaves, resolved or not, in canonical order.
pub fn enumerate_all_topologies(p: usize) -> Result<Vec<Topology>> {
    if !(1..=6).contains(&p) {
        return Err(invalid(format!("exhaustive enumeration supports 1 <= p <= 6, got {p}")));
    }
    let all = internal_splits(p);
    let mut sets = Vec::new();
    extend_compatible(&all, 0, &mut Vec::new(), &mut sets);
    let mut out: Vec<Topology> = sets
        .into_iter()
        .map(|mut s| {
            s.sort();
            Topology::from_sorted_unchecked(p, s)
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Every resolved topology on `p` leaves, in canonical order.
pub fn enumerate_topologies(p: usize) -> Result<Vec<Topology>> {
    if !(2..=7).contains(&p) {
        return Err(invalid(format!("topology enumeration supports 2 <= p <= 7, got {p}")));
    }
    // Grow resolved trees by attaching leaf k to every edge of each tree on
    // leaves 1..k-1; each resolved tree arises exactly once.
    let mut current: Vec<Vec<u64>> = vec![vec![]];
    for k in 3..=p {
        let bit = 1u64 << (k - 1);
        let mut next = Vec::new();
        for splits in &current {
            let prev_full = (1u64 << (k - 1)) - 1;
            // Edges of the tree on k-1 leaves: leaves, internal splits, root.
            let mut edges: Vec<u64> = (0..k - 1).map(|i| 1u64 << i).collect();
            edges.extend(splits.iter().copied());
            edges.push(prev_full);
            for &e in &edges {
                let mut new_splits: Vec<u64> = splits
                    .iter()
                    .map(|&s| if s != e && s & e == e { s | bit } else { s })
                    .collect();
                // Subdividing edge `e` creates the clade `e ∪ {k}`. On the
                // root edge that clade is the full set, and the old full set
                // becomes internal instead.
                new_splits.push(if e == prev_full { prev_full } else { e | bit });
                new_splits.sort_unstable();
                next.push(new_splits);
            }
        }
        current = next;
    }
    let mut out: Vec<Topology> = current
        .into_iter()
        .map(|masks| {
            let splits = masks.into_iter().map(|m| Split::new_unchecked(m, p)).collect();
            Topology::from_sorted_unchecked(p, splits)
        })
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}
