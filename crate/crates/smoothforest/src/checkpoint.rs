//! Embedding network checkpoints.
//!
//! `{"input_dim": m, "layers": [{"weights": [[...], ...], "biases": [...], "activation": "relu"}]}`
//! with one weight row per output unit. `input_dim` is required only when
//! `layers` is empty.

use std::path::Path;

use serde::{Deserialize, Serialize};
use smoothforest_core::neural::{Activation, EmbeddingNet, Layer};

use crate::error::{read_file, write_file, IoError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_dim: Option<usize>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    activation: String,
}

pub fn export_embedding(net: &EmbeddingNet) -> String {
    let layers = net
        .layers()
        .iter()
        .map(|l| LayerDoc {
            weights: (0..l.out_dim()).map(|o| l.row(o).to_vec()).collect(),
            biases: l.biases.clone(),
            activation: l.activation.name().to_string(),
        })
        .collect();
    let doc = CheckpointDoc { input_dim: Some(net.input_dim()), layers };
    let mut s = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn import_embedding(document: &str) -> Result<EmbeddingNet> {
    let doc: CheckpointDoc = serde_json::from_str(document)?;
    let input_dim = match (doc.input_dim, doc.layers.first()) {
        (Some(d), _) => d,
        (None, Some(l)) => l.weights.first().map_or(0, Vec::len),
        (None, None) => {
            return Err(IoError::Schema { node: "document".into(), reason: "empty network needs \"input_dim\"".into() })
        }
    };
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.into_iter().enumerate() {
        let node = format!("layers[{i}]");
        let activation = Activation::from_name(&l.activation)
            .ok_or_else(|| IoError::Schema { node: node.clone(), reason: format!("unknown activation {:?}", l.activation) })?;
        let in_dim = l.weights.first().map_or(0, Vec::len);
        if l.weights.iter().any(|r| r.len() != in_dim) {
            return Err(IoError::Schema { node, reason: "weight rows differ in length".into() });
        }
        let weights = l.weights.into_iter().flatten().collect();
        layers.push(
            Layer::new(in_dim, weights, l.biases, activation)
                .map_err(|e| IoError::Schema { node, reason: e.to_string() })?,
        );
    }
    Ok(EmbeddingNet::new(input_dim, layers)?)
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingNet> {
    import_embedding(&read_file(path)?)
}

pub fn write_embedding(path: &Path, net: &EmbeddingNet) -> Result<()> {
    write_file(path, export_embedding(net).as_bytes())
}
