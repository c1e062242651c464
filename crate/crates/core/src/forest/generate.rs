use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Forest, Leaf, Node, SplitNode, Tree};
use crate::error::{Error, Result};

/// How leaves of a randomly generated tree are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafInit {
    /// Each component drawn independently from {0, 1}.
    #[default]
    Binary01,
    Uniform01,
    Zero,
}

impl LeafInit {
    fn sample<R: Rng + ?Sized>(self, output_dim: usize, rng: &mut R) -> Vec<f64> {
        (0..output_dim)
            .map(|_| match self {
                LeafInit::Binary01 => f64::from(u8::from(rng.random_bool(0.5))),
                LeafInit::Uniform01 => rng.random::<f64>(),
                LeafInit::Zero => 0.0,
            })
            .collect()
    }
}

/// Complete random tree with exactly `depth` levels of splits.
///
/// Each split picks a feature uniformly and a threshold uniformly from `[0, 1]`
/// restricted to the interval that feature still has along the current path, so
/// no leaf region is ever empty.
pub fn generate_random_tree<R: Rng + ?Sized>(
    input_dim: usize,
    depth: usize,
    leaf_init: LeafInit,
    output_dim: usize,
    rng: &mut R,
) -> Result<Tree> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument("input_dim must be at least 1".into()));
    }
    let mut nodes = Vec::with_capacity((1usize << (depth + 1)) - 1);
    let mut bounds = vec![(0.0f64, 1.0f64); input_dim];
    grow(&mut nodes, &mut bounds, depth, leaf_init, output_dim, rng);
    Tree::from_nodes(nodes)
}

fn grow<R: Rng + ?Sized>(
    nodes: &mut Vec<Node>,
    bounds: &mut [(f64, f64)],
    remaining: usize,
    leaf_init: LeafInit,
    output_dim: usize,
    rng: &mut R,
) -> usize {
    let idx = nodes.len();
    if remaining == 0 {
        nodes.push(Node::Leaf(Leaf { value: leaf_init.sample(output_dim, rng), trainable: true }));
        return idx;
    }
    let feature = rng.random_range(0..bounds.len());
    let (lo, hi) = bounds[feature];
    let threshold = loop {
        let t = lo + (hi - lo) * rng.random::<f64>();
        // t == lo would leave the left branch empty
        if t > lo && t < hi {
            break t;
        }
    };
    nodes.push(Node::Split(SplitNode { feature, threshold, left: 0, right: 0 }));

    bounds[feature] = (lo, threshold);
    let left = grow(nodes, bounds, remaining - 1, leaf_init, output_dim, rng);
    bounds[feature] = (threshold, hi);
    let right = grow(nodes, bounds, remaining - 1, leaf_init, output_dim, rng);
    bounds[feature] = (lo, hi);

    if let Node::Split(s) = &mut nodes[idx] {
        s.left = left;
        s.right = right;
    }
    idx
}

/// `num_trees` independent random trees.
pub fn generate_random_forest<R: Rng + ?Sized>(
    num_trees: usize,
    input_dim: usize,
    depth: usize,
    leaf_init: LeafInit,
    output_dim: usize,
    rng: &mut R,
) -> Result<Forest> {
    let trees = (0..num_trees)
        .map(|_| generate_random_tree(input_dim, depth, leaf_init, output_dim, rng))
        .collect::<Result<Vec<_>>>()?;
    Forest::new(input_dim, output_dim, trees)
}
