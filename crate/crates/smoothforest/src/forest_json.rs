//! JSON documents for forests.
//!
//! ```json
//! {"input_dim": 1, "output_dim": 1, "trees": [
//!   {"split": {"feature": 0, "threshold": 0.5,
//!              "left": {"leaf": {"value": [0.0]}},
//!              "right": {"leaf": {"value": [1.0]}}}}
//! ]}
//! ```
//!
//! A split sends `x[feature] >= threshold` right. A leaf may carry
//! `"trainable": false`; the field is omitted when true.

use std::path::Path;

use serde_json::{json, Map, Value};
use smoothforest_core::forest::{Forest, Node, Tree};

use crate::error::{read_file, write_file, IoError, Result};

pub fn export_forest(forest: &Forest) -> String {
    let trees: Vec<Value> = forest.trees().iter().map(|t| node_json(t, 0)).collect();
    let doc = json!({
        "input_dim": forest.input_dim(),
        "output_dim": forest.output_dim(),
        "trees": trees,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("forest serializes");
    s.push('\n');
    s
}

fn node_json(tree: &Tree, idx: usize) -> Value {
    match &tree.nodes()[idx] {
        Node::Split(s) => json!({"split": {
            "feature": s.feature,
            "threshold": s.threshold,
            "left": node_json(tree, s.left),
            "right": node_json(tree, s.right),
        }}),
        Node::Leaf(l) => {
            let mut leaf = Map::new();
            leaf.insert("value".into(), json!(l.value));
            if !l.trainable {
                leaf.insert("trainable".into(), Value::Bool(false));
            }
            json!({ "leaf": leaf })
        }
    }
}

pub fn import_forest(document: &str) -> Result<Forest> {
    let doc: Value = serde_json::from_str(document)?;
    let root = doc.as_object().ok_or_else(|| schema("document", "expected an object"))?;
    let input_dim = get_usize(root, "input_dim", "document")?;
    let output_dim = get_usize(root, "output_dim", "document")?;
    let trees = root
        .get("trees")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("document", "missing array field \"trees\""))?;
    let dims = Dims { input_dim, output_dim };
    let trees = trees
        .iter()
        .enumerate()
        .map(|(i, t)| dims.parse_node(t, &format!("trees[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest::new(input_dim, output_dim, trees)?)
}

pub fn read_forest(path: &Path) -> Result<Forest> {
    import_forest(&read_file(path)?)
}

pub fn write_forest(path: &Path, forest: &Forest) -> Result<()> {
    write_file(path, export_forest(forest).as_bytes())
}

struct Dims {
    input_dim: usize,
    output_dim: usize,
}

impl Dims {
    fn parse_node(&self, v: &Value, path: &str) -> Result<Tree> {
        let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
        match (obj.get("split"), obj.get("leaf")) {
            (Some(s), None) => self.parse_split(s, path),
            (None, Some(l)) => self.parse_leaf(l, path),
            (Some(_), Some(_)) => Err(schema(path, "node has both \"split\" and \"leaf\"")),
            (None, None) => Err(schema(path, "node has neither \"split\" nor \"leaf\"")),
        }
    }

    fn parse_split(&self, v: &Value, path: &str) -> Result<Tree> {
        let s = v.as_object().ok_or_else(|| schema(path, "\"split\" must be an object"))?;
        let feature = get_usize(s, "feature", path)?;
        if feature >= self.input_dim {
            return Err(schema(path, &format!("feature {feature} out of range for input_dim {}", self.input_dim)));
        }
        let threshold = s
            .get("threshold")
            .and_then(Value::as_f64)
            .ok_or_else(|| schema(path, "missing numeric \"threshold\""))?;
        if !threshold.is_finite() {
            return Err(schema(path, "threshold is not finite"));
        }
        let child = |side: &str| -> Result<Tree> {
            let c = s.get(side).ok_or_else(|| schema(path, &format!("split is missing its {side} child")))?;
            self.parse_node(c, &format!("{path}/{side}"))
        };
        Ok(Tree::split(feature, threshold, child("left")?, child("right")?))
    }

    fn parse_leaf(&self, v: &Value, path: &str) -> Result<Tree> {
        let l = v.as_object().ok_or_else(|| schema(path, "\"leaf\" must be an object"))?;
        let values = l
            .get("value")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(path, "leaf is missing array \"value\""))?;
        let value = values
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| schema(path, "leaf values must be finite numbers"))?;
        if value.len() != self.output_dim {
            return Err(schema(
                path,
                &format!("leaf has {} values but output_dim is {}", value.len(), self.output_dim),
            ));
        }
        let trainable = match l.get("trainable") {
            None => true,
            Some(Value::Bool(b)) => *b,
            Some(_) => return Err(schema(path, "\"trainable\" must be a boolean")),
        };
        let mut tree = Tree::leaf(value);
        if !trainable {
            tree.leaves_mut().for_each(|leaf| leaf.trainable = false);
        }
        Ok(tree)
    }
}

fn get_usize(obj: &Map<String, Value>, key: &str, path: &str) -> Result<usize> {
    obj.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| schema(path, &format!("missing non-negative integer \"{key}\"")))
}

fn schema(node: &str, reason: &str) -> IoError {
    IoError::Schema { node: node.to_string(), reason: reason.to_string() }
}
