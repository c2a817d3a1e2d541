//! Splits of the leaf set `{1..p}`, stored as `u64` bitmasks.
//!
//! Leaf `i` occupies bit `i - 1`. The root leaf `0` is never a member; it is
//! implicitly in every complement, so two splits are compatible iff one of
//! `a ∩ b`, `a ∖ b`, `b ∖ a` is empty.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{check_dim, invalid, Result};

pub const MAX_LEAVES: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Split {
    // Field order matters for the derived `Ord`: mask first gives the
    // canonical ascending-bitmask order within one leaf count.
    mask: u64,
    p: u8,
}

pub(crate) fn full_mask(p: usize) -> u64 {
    if p == 64 {
        u64::MAX
    } else {
        (1u64 << p) - 1
    }
}

impl Split {
    pub fn from_mask(mask: u64, p: usize) -> Result<Self> {
        if p == 0 || p > MAX_LEAVES {
            return Err(invalid(format!("leaf count {p} outside 1..={MAX_LEAVES}")));
        }
        if mask == 0 {
            return Err(invalid("a split must be non-empty"));
        }
        if mask & !full_mask(p) != 0 {
            return Err(invalid(format!("mask {mask:#x} has members outside 1..={p}")));
        }
        Ok(Self { mask, p: p as u8 })
    }

    /// Builds a split from 1-based leaf labels.
    pub fn from_leaves(leaves: &[usize], p: usize) -> Result<Self> {
        let mut mask = 0u64;
        for &leaf in leaves {
            if leaf == 0 || leaf > p {
                return Err(invalid(format!("leaf label {leaf} outside 1..={p}")));
            }
            mask |= 1u64 << (leaf - 1);
        }
        Self::from_mask(mask, p)
    }

    pub(crate) fn new_unchecked(mask: u64, p: usize) -> Self {
        debug_assert!(mask != 0 && mask & !full_mask(p) == 0);
        Self { mask, p: p as u8 }
    }

    pub fn leaf(leaf: usize, p: usize) -> Result<Self> {
        Self::from_leaves(&[leaf], p)
    }

    /// The root-edge split `{1..p}`.
    pub fn root(p: usize) -> Result<Self> {
        Self::from_mask(full_mask(p), p)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn p(&self) -> usize {
        self.p as usize
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_leaf(&self) -> bool {
        self.len() == 1
    }

    pub fn is_root(&self) -> bool {
        self.mask == full_mask(self.p())
    }

    pub fn is_internal(&self) -> bool {
        let n = self.len();
        n >= 2 && n < self.p()
    }

    pub fn contains(&self, leaf: usize) -> bool {
        leaf >= 1 && leaf <= self.p() && self.mask & (1u64 << (leaf - 1)) != 0
    }

    pub fn is_subset_of(&self, other: &Split) -> bool {
        self.mask & !other.mask == 0
    }

    /// Sorted 1-based leaf labels.
    pub fn leaves(&self) -> Vec<usize> {
        (1..=self.p()).filter(|&i| self.contains(i)).collect()
    }

    pub fn min_leaf(&self) -> usize {
        self.mask.trailing_zeros() as usize + 1
    }

    /// Key used in archive records: sorted labels joined by commas.
    pub fn key(&self) -> String {
        self.leaves()
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_key(key: &str, p: usize) -> Result<Self> {
        let leaves = key
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("bad split key {key:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_leaves(&leaves, p)
    }

    /// Relabels leaves: leaf `i` becomes `perm[i - 1]` (1-based targets).
    pub fn relabel(&self, perm: &[usize]) -> Split {
        let mut mask = 0u64;
        for leaf in self.leaves() {
            mask |= 1u64 << (perm[leaf - 1] - 1);
        }
        Split::new_unchecked(mask, self.p())
    }
}

/// Serialized as its sorted leaf labels.
impl Serialize for Split {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.leaves().serialize(serializer)
    }
}

impl fmt::Debug for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.key())
    }
}

fn masks_compatible(a: u64, b: u64) -> bool {
    a == b || a & b == 0 || a & !b == 0 || b & !a == 0
}

pub fn split_compatible(a: &Split, b: &Split) -> Result<bool> {
    check_dim(a.p(), b.p())?;
    Ok(masks_compatible(a.mask, b.mask))
}

/// Same as [`split_compatible`] for splits already known to share `p`.
pub(crate) fn compatible(a: &Split, b: &Split) -> bool {
    debug_assert_eq!(a.p, b.p);
    masks_compatible(a.mask, b.mask)
}

pub fn set_compatible<'a, I>(splits: I) -> Result<bool>
where
    I: IntoIterator<Item = &'a Split>,
{
    let splits: Vec<&Split> = splits.into_iter().collect();
    if let Some(first) = splits.first() {
        for s in &splits {
            check_dim(first.p(), s.p())?;
        }
    }
    for (i, a) in splits.iter().enumerate() {
        for b in &splits[i + 1..] {
            if !compatible(a, b) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
