use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Node, Tree};
use crate::error::{Error, Result};

/// Half-open interval `[lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::EmptyInterval { lower, upper });
        }
        Ok(Interval { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x < self.upper
    }

    pub fn intersect(&self, other: &Interval) -> Result<Interval> {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper))
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lower.max(other.lower) < self.upper.min(other.upper)
    }
}

/// The axis-aligned box routed to one leaf.
///
/// Only features tested along the root-to-leaf path appear in `constraints`;
/// every other feature is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRegion {
    pub constraints: BTreeMap<usize, Interval>,
    /// Arena index of the leaf within its tree.
    pub leaf: usize,
}

impl LeafRegion {
    pub fn interval(&self, feature: usize) -> Interval {
        self.constraints.get(&feature).copied().unwrap_or(Interval::UNBOUNDED)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.constraints.iter().all(|(&f, iv)| iv.contains(x[f]))
    }

    /// True when some feature separates the two boxes.
    pub fn is_disjoint(&self, other: &LeafRegion) -> bool {
        self.constraints
            .keys()
            .chain(other.constraints.keys())
            .any(|&f| !self.interval(f).overlaps(&other.interval(f)))
    }
}

/// One region per leaf, in left-to-right leaf order.
///
/// Going right on `x[i] >= t` raises the lower bound of feature `i` to `t`;
/// going left lowers its upper bound to `t`. A path whose constraints intersect
/// to an empty interval makes the tree malformed.
pub fn extract_leaf_regions(tree: &Tree) -> Result<Vec<LeafRegion>> {
    let nodes = tree.nodes();
    let mut out = Vec::with_capacity(tree.num_leaves());
    let mut stack = vec![(0usize, BTreeMap::<usize, Interval>::new())];
    while let Some((idx, constraints)) = stack.pop() {
        match &nodes[idx] {
            Node::Leaf(_) => out.push(LeafRegion { constraints, leaf: idx }),
            Node::Split(s) => {
                let current = constraints.get(&s.feature).copied().unwrap_or(Interval::UNBOUNDED);
                let contradiction = |side: &str| Error::MalformedTree {
                    node: idx,
                    reason: format!(
                        "{side} branch of x[{}] >= {} is empty given [{}, {})",
                        s.feature,
                        s.threshold,
                        current.lower(),
                        current.upper()
                    ),
                };
                let right = current
                    .intersect(&Interval { lower: s.threshold, upper: f64::INFINITY })
                    .map_err(|_| contradiction("right"))?;
                let left = current
                    .intersect(&Interval { lower: f64::NEG_INFINITY, upper: s.threshold })
                    .map_err(|_| contradiction("left"))?;
                let mut right_c = constraints.clone();
                right_c.insert(s.feature, right);
                let mut left_c = constraints;
                left_c.insert(s.feature, left);
                stack.push((s.right, right_c));
                stack.push((s.left, left_c));
            }
        }
    }
    Ok(out)
}
