use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{check_dim, invalid, Result};

use super::split::{full_mask, Split, MAX_LEAVES};
use super::topology::Topology;

/// A stored edge-length coordinate of a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coord {
    /// Root edge, carrying the whole leaf set.
    Root,
    /// Leaf edge of leaf `k` (1-based).
    Leaf(usize),
    Internal(Split),
}

impl Coord {
    /// Leaf set below the edge; the root edge carries all of `{1..p}`.
    pub fn members(&self, p: usize) -> u64 {
        match self {
            Coord::Root => full_mask(p),
            Coord::Leaf(k) => 1u64 << (k - 1),
            Coord::Internal(s) => s.mask(),
        }
    }

    pub fn leaves(&self, p: usize) -> Vec<usize> {
        let m = self.members(p);
        (1..=p).filter(|i| m & (1u64 << (i - 1)) != 0).collect()
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, Coord::Internal(_))
    }
}

// Canonical order: ascending leaf-set bitmask, with the root edge last. The
// root's full mask exceeds every other subset mask, so this is consistent for
// any p, including p = 1 where the root and the only leaf share a mask.
impl Ord for Coord {
    fn cmp(&self, other: &Self) -> Ordering {
        fn key(c: &Coord) -> (u8, u64) {
            match c {
                Coord::Root => (1, 0),
                Coord::Leaf(k) => (0, 1u64 << (k - 1)),
                Coord::Internal(s) => (0, s.mask()),
            }
        }
        key(self).cmp(&key(other))
    }
}

impl PartialOrd for Coord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Root => write!(f, "root"),
            Coord::Leaf(k) => write!(f, "leaf{k}"),
            Coord::Internal(s) => write!(f, "{s}"),
        }
    }
}

/// A point of the extended treespace: compatible internal splits with
/// positive lengths, positive leaf lengths, and a non-negative root length.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    p: usize,
    internal: BTreeMap<Split, f64>,
    leaf_lengths: Vec<f64>,
    root_length: f64,
}

impl Tree {
    pub fn new<I>(p: usize, internal: I, leaf_lengths: Vec<f64>, root_length: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (Split, f64)>,
    {
        if p == 0 || p > MAX_LEAVES {
            return Err(invalid(format!("leaf count {p} outside 1..={MAX_LEAVES}")));
        }
        check_dim(p, leaf_lengths.len())?;
        let mut map = BTreeMap::new();
        for (s, len) in internal {
            if !(len > 0.0 && len.is_finite()) {
                return Err(invalid(format!("internal length of {s} must be positive, got {len}")));
            }
            if map.insert(s, len).is_some() {
                return Err(invalid(format!("split {s} listed twice")));
            }
        }
        // Validates p, internality and pairwise compatibility.
        Topology::new(p, map.keys().copied())?;
        for (i, &l) in leaf_lengths.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("leaf length {} must be positive, got {l}", i + 1)));
            }
        }
        if !(root_length >= 0.0 && root_length.is_finite()) {
            return Err(invalid(format!("root length must be non-negative, got {root_length}")));
        }
        Ok(Self {
            p,
            internal: map,
            leaf_lengths,
            root_length,
        })
    }

    pub(crate) fn from_parts_unchecked(
        p: usize,
        internal: BTreeMap<Split, f64>,
        leaf_lengths: Vec<f64>,
        root_length: f64,
    ) -> Self {
        Self {
            p,
            internal,
            leaf_lengths,
            root_length,
        }
    }

    pub fn star(leaf_lengths: Vec<f64>, root_length: f64) -> Result<Self> {
        Self::new(leaf_lengths.len(), [], leaf_lengths, root_length)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn internal(&self) -> &BTreeMap<Split, f64> {
        &self.internal
    }

    pub fn leaf_lengths(&self) -> &[f64] {
        &self.leaf_lengths
    }

    pub fn root_length(&self) -> f64 {
        self.root_length
    }

    pub fn topology(&self) -> Topology {
        Topology::from_sorted_unchecked(self.p, self.internal.keys().copied().collect())
    }

    pub fn splits(&self) -> impl Iterator<Item = &Split> {
        self.internal.keys()
    }

    pub fn has_split(&self, s: &Split) -> bool {
        self.internal.contains_key(s)
    }

    pub fn is_resolved(&self) -> bool {
        self.p < 2 || self.internal.len() == self.p - 2
    }

    /// Number of stored length coordinates (root, leaves, internal).
    pub fn num_coords(&self) -> usize {
        1 + self.p + self.internal.len()
    }

    /// Stored coordinates in canonical order.
    pub fn coords(&self) -> Vec<Coord> {
        let mut out: Vec<Coord> = (1..=self.p).map(Coord::Leaf).collect();
        out.extend(self.internal.keys().map(|s| Coord::Internal(*s)));
        out.push(Coord::Root);
        out.sort();
        out
    }

    /// Length of a coordinate; absent internal splits have length zero.
    pub fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::Root => self.root_length,
            Coord::Leaf(k) => self.leaf_lengths[k - 1],
            Coord::Internal(s) => self.internal.get(&s).copied().unwrap_or(0.0),
        }
    }

    /// Sets a stored coordinate, validating the new value.
    pub fn set(&mut self, c: Coord, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(invalid(format!("length for {c} must be finite")));
        }
        match c {
            Coord::Root => {
                if value < 0.0 {
                    return Err(invalid("root length must be non-negative"));
                }
                self.root_length = value;
            }
            Coord::Leaf(k) => {
                if k == 0 || k > self.p || value <= 0.0 {
                    return Err(invalid(format!("invalid leaf coordinate {k} = {value}")));
                }
                self.leaf_lengths[k - 1] = value;
            }
            Coord::Internal(s) => {
                let slot = self
                    .internal
                    .get_mut(&s)
                    .ok_or_else(|| invalid(format!("{s} is not in the tree")))?;
                if value <= 0.0 {
                    return Err(invalid(format!("internal length of {s} must be positive")));
                }
                *slot = value;
            }
        }
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, c: Coord, value: f64) {
        match c {
            Coord::Root => self.root_length = value,
            Coord::Leaf(k) => self.leaf_lengths[k - 1] = value,
            Coord::Internal(s) => {
                self.internal.insert(s, value);
            }
        }
    }

    pub(crate) fn remove_split(&mut self, s: &Split) -> Option<f64> {
        self.internal.remove(s)
    }

    /// Replaces `old` by `new` carrying `len`.
    pub(crate) fn swap_split(&mut self, old: &Split, new: Split, len: f64) {
        self.internal.remove(old);
        self.internal.insert(new, len);
    }

    /// Drops internal splits whose length is at or below `tol`.
    pub fn collapse_below(&self, tol: f64) -> Tree {
        let internal = self
            .internal
            .iter()
            .filter(|(_, &v)| v > tol)
            .map(|(s, v)| (*s, *v))
            .collect();
        Self::from_parts_unchecked(self.p, internal, self.leaf_lengths.clone(), self.root_length)
    }

    /// Returns the tree without the given internal splits.
    pub fn without_splits(&self, drop: &[Split]) -> Tree {
        let internal = self
            .internal
            .iter()
            .filter(|(s, _)| !drop.contains(s))
            .map(|(s, v)| (*s, *v))
            .collect();
        Self::from_parts_unchecked(self.p, internal, self.leaf_lengths.clone(), self.root_length)
    }

    /// Relabels leaves: leaf `i` becomes `perm[i - 1]` (a permutation of `1..=p`).
    pub fn relabel(&self, perm: &[usize]) -> Result<Tree> {
        check_dim(self.p, perm.len())?;
        let mut seen = vec![false; self.p];
        for &t in perm {
            if t == 0 || t > self.p || seen[t - 1] {
                return Err(invalid("relabeling must be a permutation of 1..=p"));
            }
            seen[t - 1] = true;
        }
        let internal = self.internal.iter().map(|(s, v)| (s.relabel(perm), *v)).collect();
        let mut leaves = vec![0.0; self.p];
        for (i, &l) in self.leaf_lengths.iter().enumerate() {
            leaves[perm[i] - 1] = l;
        }
        Ok(Self::from_parts_unchecked(self.p, internal, leaves, self.root_length))
    }

    /// Sum of lengths on the path from the root leaf to leaf `k`.
    pub fn path_length(&self, k: usize) -> f64 {
        let bit = 1u64 << (k - 1);
        self.root_length
            + self.leaf_lengths[k - 1]
            + self
                .internal
                .iter()
                .filter(|(s, _)| s.mask() & bit != 0)
                .map(|(_, v)| v)
                .sum::<f64>()
    }

    /// Same splits, and every length within `tol`.
    pub fn approx_eq(&self, other: &Tree, tol: f64) -> bool {
        self.p == other.p
            && self.internal.len() == other.internal.len()
            && self
                .internal
                .iter()
                .zip(other.internal.iter())
                .all(|((a, x), (b, y))| a == b && (x - y).abs() <= tol)
            && self
                .leaf_lengths
                .iter()
                .zip(&other.leaf_lengths)
                .all(|(x, y)| (x - y).abs() <= tol)
            && (self.root_length - other.root_length).abs() <= tol
    }

    /// Checks every structural invariant; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<()> {
        Tree::new(
            self.p,
            self.internal.iter().map(|(s, v)| (*s, *v)),
            self.leaf_lengths.clone(),
            self.root_length,
        )
        .map(|_| ())
    }
}
