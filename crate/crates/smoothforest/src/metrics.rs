//! Newline-delimited JSON training log, one record per epoch.

use serde::Serialize;
use smoothforest_core::training::{EpochMetrics, TrainHistory};

#[derive(Serialize)]
struct Record {
    epoch: usize,
    sigma: f64,
    train_loss: f64,
    valid_loss: f64,
    valid_accuracy: Option<f64>,
}

impl From<&EpochMetrics> for Record {
    fn from(m: &EpochMetrics) -> Self {
        Record {
            epoch: m.epoch,
            sigma: m.sigma,
            train_loss: m.train_loss,
            valid_loss: m.valid_loss,
            valid_accuracy: m.valid_accuracy,
        }
    }
}

/// One line per trained epoch; the untrained model is not logged.
pub fn metrics_log(history: &TrainHistory) -> String {
    let mut out = String::new();
    for m in &history.epochs {
        out.push_str(&serde_json::to_string(&Record::from(m)).expect("record serializes"));
        out.push('\n');
    }
    out
}
