//! Decision tree and forest data model.
//!
//! Trees are binary and axis-aligned. A split node tests `x[feature] >= threshold`;
//! when the test holds the right child is taken, so a point lying exactly on a
//! threshold goes right. Leaves hold vectors of length `output_dim` and the
//! forest output is the unweighted sum of its trees.

mod boost;
mod generate;
mod region;

pub use boost::{train_boosted_forest, BoostConfig};
pub use generate::{generate_random_forest, generate_random_tree, LeafInit};
pub use region::{extract_leaf_regions, Interval, LeafRegion};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_input, Error, Result};

/// Internal decision `x[feature] >= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitNode {
    pub feature: usize,
    pub threshold: f64,
    /// Arena index of the child taken when the test fails.
    pub left: usize,
    /// Arena index of the child taken when the test holds.
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub value: Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split(SplitNode),
    Leaf(Leaf),
}

/// Identifies one leaf of a forest: tree position and arena index of the leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LeafId {
    pub tree: usize,
    pub node: usize,
}

/// A binary tree stored as an arena; node 0 is the root.
///
/// Nodes are laid out in preorder when built through the constructors in this
/// crate, but any acyclic arena where every node is reachable exactly once is
/// accepted by [`Tree::from_nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    depth: usize,
}

impl Tree {
    /// Single-leaf tree.
    pub fn leaf(value: Vec<f64>) -> Self {
        Tree { nodes: vec![Node::Leaf(Leaf { value, trainable: true })], depth: 0 }
    }

    /// Joins two subtrees under a new root testing `x[feature] >= threshold`.
    pub fn split(feature: usize, threshold: f64, left: Tree, right: Tree) -> Self {
        let depth = 1 + left.depth.max(right.depth);
        let left_len = left.nodes.len();
        let mut nodes = Vec::with_capacity(1 + left_len + right.nodes.len());
        nodes.push(Node::Split(SplitNode { feature, threshold, left: 1, right: 1 + left_len }));
        nodes.extend(left.nodes.into_iter().map(|n| shift(n, 1)));
        nodes.extend(right.nodes.into_iter().map(|n| shift(n, 1 + left_len)));
        Tree { nodes, depth }
    }

    /// Builds a tree from an explicit arena, validating its structure.
    ///
    /// Every node must be reachable from node 0 exactly once, thresholds and
    /// leaf entries must be finite, and all leaves must share one length.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::MalformedTree { node: 0, reason: "tree has no nodes".into() });
        }
        let mut seen = vec![false; nodes.len()];
        let mut depth = 0;
        let mut leaf_len = None;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((idx, level)) = stack.pop() {
            if idx >= nodes.len() {
                return Err(Error::MalformedTree {
                    node: idx,
                    reason: format!("child reference {idx} is out of range"),
                });
            }
            if seen[idx] {
                return Err(Error::MalformedTree {
                    node: idx,
                    reason: "node is referenced more than once".into(),
                });
            }
            seen[idx] = true;
            match &nodes[idx] {
                Node::Split(s) => {
                    if !s.threshold.is_finite() {
                        return Err(Error::MalformedTree {
                            node: idx,
                            reason: "non-finite threshold".into(),
                        });
                    }
                    stack.push((s.right, level + 1));
                    stack.push((s.left, level + 1));
                }
                Node::Leaf(l) => {
                    if l.value.iter().any(|v| !v.is_finite()) {
                        return Err(Error::MalformedTree {
                            node: idx,
                            reason: "non-finite leaf value".into(),
                        });
                    }
                    match leaf_len {
                        None => leaf_len = Some(l.value.len()),
                        Some(n) if n != l.value.len() => {
                            return Err(Error::MalformedTree {
                                node: idx,
                                reason: format!("leaf has {} outputs, expected {n}", l.value.len()),
                            })
                        }
                        Some(_) => {}
                    }
                    depth = depth.max(level);
                }
            }
        }
        if let Some(idx) = seen.iter().position(|s| !s) {
            return Err(Error::MalformedTree { node: idx, reason: "node is unreachable".into() });
        }
        Ok(Tree { nodes, depth })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// Arena indices of the leaves in left-to-right order.
    pub fn leaf_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx] {
                Node::Split(s) => {
                    stack.push(s.right);
                    stack.push(s.left);
                }
                Node::Leaf(_) => out.push(idx),
            }
        }
        out
    }

    pub fn leaf_at(&self, node: usize) -> Option<&Leaf> {
        match self.nodes.get(node) {
            Some(Node::Leaf(l)) => Some(l),
            _ => None,
        }
    }

    pub fn leaf_mut(&mut self, node: usize) -> Option<&mut Leaf> {
        match self.nodes.get_mut(node) {
            Some(Node::Leaf(l)) => Some(l),
            _ => None,
        }
    }

    pub fn leaves_mut(&mut self) -> impl Iterator<Item = &mut Leaf> {
        self.nodes.iter_mut().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split(_) => None,
        })
    }

    /// Arena index of the leaf reached by `x`. No dimension checks.
    pub fn route(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split(s) => idx = if x[s.feature] >= s.threshold { s.right } else { s.left },
                Node::Leaf(_) => return idx,
            }
        }
    }

    /// Leaf value reached by `x`. No dimension checks.
    pub fn value_at(&self, x: &[f64]) -> &[f64] {
        match &self.nodes[self.route(x)] {
            Node::Leaf(l) => &l.value,
            Node::Split(_) => unreachable!("route always ends at a leaf"),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split(s) => Some(s.feature),
                Node::Leaf(_) => None,
            })
            .max()
    }

    fn output_len(&self) -> usize {
        self.nodes
            .iter()
            .find_map(|n| match n {
                Node::Leaf(l) => Some(l.value.len()),
                Node::Split(_) => None,
            })
            .unwrap_or(0)
    }
}

fn shift(node: Node, by: usize) -> Node {
    match node {
        Node::Split(s) => Node::Split(SplitNode { left: s.left + by, right: s.right + by, ..s }),
        leaf => leaf,
    }
}

/// Hard evaluation of one tree: the value of the unique leaf whose region holds `x`.
pub fn evaluate_tree(tree: &Tree, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(f) = tree.max_feature() {
        if f >= x.len() {
            return Err(Error::DimensionMismatch { expected: f + 1, got: x.len() });
        }
    }
    Ok(tree.value_at(x).to_vec())
}

/// An unweighted sum of trees over a common input and output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    input_dim: usize,
    output_dim: usize,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn new(input_dim: usize, output_dim: usize, trees: Vec<Tree>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("forest input_dim must be at least 1".into()));
        }
        for (t, tree) in trees.iter().enumerate() {
            if let Some(f) = tree.max_feature() {
                if f >= input_dim {
                    return Err(Error::MalformedTree {
                        node: 0,
                        reason: format!("tree {t} splits on feature {f} but input_dim is {input_dim}"),
                    });
                }
            }
            let len = tree.output_len();
            if len != output_dim {
                return Err(Error::MalformedTree {
                    node: 0,
                    reason: format!("tree {t} has {len} outputs but output_dim is {output_dim}"),
                });
            }
        }
        Ok(Forest { input_dim, output_dim, trees })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn num_leaves(&self) -> usize {
        self.trees.iter().map(Tree::num_leaves).sum()
    }

    /// All leaves, tree by tree, each tree's leaves left to right.
    pub fn leaf_ids(&self) -> Vec<LeafId> {
        self.trees
            .iter()
            .enumerate()
            .flat_map(|(tree, t)| t.leaf_nodes().into_iter().map(move |node| LeafId { tree, node }))
            .collect()
    }

    pub fn leaf(&self, id: LeafId) -> Option<&Leaf> {
        self.trees.get(id.tree)?.leaf_at(id.node)
    }

    pub fn leaf_mut(&mut self, id: LeafId) -> Option<&mut Leaf> {
        self.trees.get_mut(id.tree)?.leaf_mut(id.node)
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for tree in &mut self.trees {
            for leaf in tree.leaves_mut() {
                leaf.trainable = trainable;
            }
        }
    }

    /// Hard evaluation, summing tree outputs in tree order.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(x, self.input_dim)?;
        let mut out = vec![0.0; self.output_dim];
        self.accumulate(x, &mut out);
        Ok(out)
    }

    /// Adds the forest output at `x` into `out`. No dimension checks.
    pub fn accumulate(&self, x: &[f64], out: &mut [f64]) {
        for tree in &self.trees {
            for (o, v) in out.iter_mut().zip(tree.value_at(x)) {
                *o += v;
            }
        }
    }
}

/// Hard evaluation of a forest: elementwise sum of [`evaluate_tree`] over its trees.
pub fn evaluate_forest(forest: &Forest, x: &[f64]) -> Result<Vec<f64>> {
    forest.evaluate(x)
}
