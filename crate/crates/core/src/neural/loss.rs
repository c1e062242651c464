use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Binary task, one logit, labels in {0, 1}.
    SigmoidCrossEntropy,
    /// `classes` logits, labels are class indices.
    SoftmaxCrossEntropy { classes: usize },
    /// Scalar regression, `0.5 * (prediction - label)^2`.
    SquaredError,
}

impl LossKind {
    /// Length of the prediction vector this loss consumes.
    pub fn output_dim(&self) -> usize {
        match self {
            LossKind::SigmoidCrossEntropy | LossKind::SquaredError => 1,
            LossKind::SoftmaxCrossEntropy { classes } => *classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, LossKind::SquaredError)
    }

    /// Predicted class: the sign of the logit for binary, argmax otherwise.
    pub fn predict_class(&self, prediction: &[f64]) -> usize {
        match self {
            LossKind::SigmoidCrossEntropy => usize::from(prediction[0] > 0.0),
            _ => argmax(prediction),
        }
    }

    /// Whether a classification prediction matches `label`.
    pub fn is_correct(&self, prediction: &[f64], label: f64) -> bool {
        self.predict_class(prediction) as f64 == label
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Validates a softmax label and returns it as a class index.
pub fn class_index(label: f64, classes: usize) -> Result<usize> {
    if label >= 0.0 && libm::trunc(label) == label && (label as usize) < classes {
        Ok(label as usize)
    } else {
        Err(Error::LabelOutOfRange { label, loss: "softmax cross-entropy" })
    }
}

/// Loss value and its gradient with respect to `prediction`.
pub fn loss_and_grad(kind: LossKind, prediction: &[f64], label: f64) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != kind.output_dim() {
        return Err(Error::DimensionMismatch { expected: kind.output_dim(), got: prediction.len() });
    }
    match kind {
        LossKind::SigmoidCrossEntropy => {
            if !(0.0..=1.0).contains(&label) {
                return Err(Error::LabelOutOfRange { label, loss: "sigmoid cross-entropy" });
            }
            let p = prediction[0];
            // log(1 + e^p) - p*y without overflow
            let loss = p.max(0.0) - p * label + libm::log1p(libm::exp(-p.abs()));
            Ok((loss, vec![sigmoid(p) - label]))
        }
        LossKind::SoftmaxCrossEntropy { classes } => {
            let k = class_index(label, classes)?;
            let max = prediction.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = prediction.iter().map(|p| libm::exp(p - max)).collect();
            let total: f64 = exps.iter().sum();
            let loss = libm::log(total) + max - prediction[k];
            let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
            grad[k] -= 1.0;
            Ok((loss, grad))
        }
        LossKind::SquaredError => {
            if !label.is_finite() {
                return Err(Error::LabelOutOfRange { label, loss: "squared error" });
            }
            let r = prediction[0] - label;
            Ok((0.5 * r * r, vec![r]))
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
