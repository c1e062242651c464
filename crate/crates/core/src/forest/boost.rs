//! Minimal greedy gradient boosting.
//!
//! Each round fits one CART regression tree to the negative loss gradients
//! (variance-reduction splits, vector residuals summed over output components)
//! and sets each leaf to `learning_rate` times the mean residual it holds. The
//! initial prediction (the label prior) is folded into the leaves of the first
//! tree so a forest of `num_trees` trees is exactly what evaluation sums. A
//! round whose tree would raise the training loss has its leaves halved until
//! it no longer does.

use alloc::vec;
use alloc::vec::Vec;

use super::{Forest, Leaf, Node, SplitNode, Tree};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::neural::{loss_and_grad, LossKind};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub min_samples_leaf: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            num_trees: 32,
            max_depth: 4,
            learning_rate: 0.3,
            loss: LossKind::SigmoidCrossEntropy,
            min_samples_leaf: 1,
        }
    }
}

const MAX_HALVINGS: usize = 40;
const PRIOR_CLAMP: f64 = 1e-6;

pub fn train_boosted_forest(data: &Dataset, config: &BoostConfig) -> Result<Forest> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n < 2 {
        return Err(Error::InvalidArgument("boosting needs at least 2 examples".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument("learning_rate must be positive".into()));
    }
    let dim = data.dim();
    for row in &data.features {
        crate::error::check_input(row, dim)?;
    }
    let out_dim = config.loss.output_dim();

    let prior = prior(data, config.loss)?;
    let mut scores: Vec<Vec<f64>> = vec![prior.clone(); n];
    let mut loss = mean_loss(config.loss, &scores, &data.labels)?;

    let mut trees = Vec::with_capacity(config.num_trees);
    for round in 0..config.num_trees {
        let mut residuals = Vec::with_capacity(n);
        for (s, &y) in scores.iter().zip(&data.labels) {
            let (_, g) = loss_and_grad(config.loss, s, y)?;
            residuals.push(g.into_iter().map(|v| -v).collect::<Vec<f64>>());
        }

        let mut builder = TreeBuilder {
            features: &data.features,
            residuals: &residuals,
            out_dim,
            max_depth: config.max_depth,
            min_leaf: config.min_samples_leaf.max(1),
            nodes: Vec::new(),
        };
        let all: Vec<usize> = (0..n).collect();
        builder.build(&all, 0);
        let mut tree = Tree::from_nodes(builder.nodes)?;
        for leaf in tree.leaves_mut() {
            leaf.value.iter_mut().for_each(|v| *v *= config.learning_rate);
        }

        let contributions: Vec<Vec<f64>> =
            data.features.iter().map(|x| tree.value_at(x).to_vec()).collect();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<Vec<f64>> = scores
                .iter()
                .zip(&contributions)
                .map(|(s, c)| s.iter().zip(c).map(|(a, b)| a + scale * b).collect())
                .collect();
            let trial_loss = mean_loss(config.loss, &trial, &data.labels)?;
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((trial, trial_loss)) => {
                scores = trial;
                loss = trial_loss;
            }
            None => scale = 0.0,
        }
        for leaf in tree.leaves_mut() {
            for (c, v) in leaf.value.iter_mut().enumerate() {
                *v *= scale;
                if round == 0 {
                    *v += prior[c];
                }
            }
        }
        trees.push(tree);
    }
    let mut forest = Forest::new(dim, out_dim, trees)?;
    forest.set_all_trainable(false);
    Ok(forest)
}

fn prior(data: &Dataset, loss: LossKind) -> Result<Vec<f64>> {
    let n = data.len() as f64;
    Ok(match loss {
        LossKind::SquaredError => vec![data.labels.iter().sum::<f64>() / n],
        LossKind::SigmoidCrossEntropy => {
            for &y in &data.labels {
                if !(0.0..=1.0).contains(&y) {
                    return Err(Error::LabelOutOfRange { label: y, loss: "sigmoid cross-entropy" });
                }
            }
            let p = (data.labels.iter().sum::<f64>() / n).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
            vec![libm::log(p / (1.0 - p))]
        }
        LossKind::SoftmaxCrossEntropy { classes } => {
            let mut counts = vec![0.0; classes];
            for &y in &data.labels {
                let k = crate::neural::class_index(y, classes)?;
                counts[k] += 1.0;
            }
            counts.iter().map(|c| libm::log((c / n).max(PRIOR_CLAMP))).collect()
        }
    })
}

fn mean_loss(kind: LossKind, scores: &[Vec<f64>], labels: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (s, &y) in scores.iter().zip(labels) {
        total += loss_and_grad(kind, s, y)?.0;
    }
    Ok(total / scores.len() as f64)
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    residuals: &'a [Vec<f64>],
    out_dim: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let split = if depth < self.max_depth { self.best_split(idx) } else { None };
        match split {
            None => {
                let mut mean = vec![0.0; self.out_dim];
                for &i in idx {
                    for (m, r) in mean.iter_mut().zip(&self.residuals[i]) {
                        *m += r;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
                self.nodes.push(Node::Leaf(Leaf { value: mean, trainable: false }));
            }
            Some(best) => {
                self.nodes.push(Node::Split(SplitNode {
                    feature: best.feature,
                    threshold: best.threshold,
                    left: 0,
                    right: 0,
                }));
                let (right, left): (Vec<usize>, Vec<usize>) =
                    idx.iter().partition(|&&i| self.features[i][best.feature] >= best.threshold);
                let l = self.build(&left, depth + 1);
                let r = self.build(&right, depth + 1);
                if let Node::Split(s) = &mut self.nodes[id] {
                    s.left = l;
                    s.right = r;
                }
            }
        }
        id
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let mut total = vec![0.0; self.out_dim];
        let mut sumsq = 0.0;
        for &i in idx {
            for (t, r) in total.iter_mut().zip(&self.residuals[i]) {
                *t += r;
                sumsq += r * r;
            }
        }
        let parent = total.iter().map(|s| s * s).sum::<f64>() / n as f64;

        let mut best: Option<BestSplit> = None;
        let mut order = idx.to_vec();
        let mut left = vec![0.0; self.out_dim];
        for feature in 0..self.features[idx[0]].len() {
            order.sort_by(|&a, &b| self.features[a][feature].total_cmp(&self.features[b][feature]));
            left.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n - 1 {
                for (l, r) in left.iter_mut().zip(&self.residuals[order[k]]) {
                    *l += r;
                }
                let lo = self.features[order[k]][feature];
                let hi = self.features[order[k + 1]][feature];
                let n_left = k + 1;
                if lo == hi || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let score_l = left.iter().map(|s| s * s).sum::<f64>() / n_left as f64;
                let score_r = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| (t - l) * (t - l))
                    .sum::<f64>()
                    / (n - n_left) as f64;
                let gain = score_l + score_r - parent;
                if gain > 1e-12 * sumsq && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(BestSplit { gain, feature, threshold });
                }
            }
        }
        best
    }
}
