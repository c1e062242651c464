use smoothforest::checkpoint::{export_embedding, import_embedding};
use smoothforest::csv_io::{format_csv, load_csv, parse_csv, CsvSchema};
use smoothforest::forest_json::{export_forest, import_forest};
use smoothforest::heatmap::{evaluate_grid, to_csv, to_pgm, total_variation, GridSpec};
use smoothforest::metrics::metrics_log;
use smoothforest::report::{comparison_row, format_delta};
use smoothforest::IoError;
use smoothforest_core::datasets::{generate, SyntheticKind, SyntheticSpec};
use smoothforest_core::forest::{generate_random_forest, Forest, LeafInit, Tree};
use smoothforest_core::neural::{Activation, EmbeddingNet};
use smoothforest_core::seeded_rng;
use smoothforest_core::training::{EpochMetrics, TrainHistory};

const ONE_SPLIT: &str = r#"{"input_dim": 1, "output_dim": 1, "trees": [
  {"split": {"feature": 0, "threshold": 0.5,
             "left": {"leaf": {"value": [0.0]}},
             "right": {"leaf": {"value": [1.0]}}}}]}"#;

#[test]
fn hand_written_forest_evaluates() {
    let f = import_forest(ONE_SPLIT).unwrap();
    assert_eq!(f.evaluate(&[0.9]).unwrap(), vec![1.0]);
    assert_eq!(f.evaluate(&[0.5]).unwrap(), vec![1.0]);
    assert_eq!(f.evaluate(&[0.1]).unwrap(), vec![0.0]);
}

#[test]
fn forest_round_trip_is_exact() {
    let mut rng = seeded_rng(3);
    let mut f = generate_random_forest(5, 3, 4, LeafInit::Uniform01, 2, &mut rng).unwrap();
    let id = f.leaf_ids()[3];
    f.leaf_mut(id).unwrap().trainable = false;
    let doc = export_forest(&f);
    let back = import_forest(&doc).unwrap();
    assert_eq!(back, f);
    assert_eq!(export_forest(&back), doc);
    let empty = Forest::new(2, 1, vec![]).unwrap();
    assert_eq!(import_forest(&export_forest(&empty)).unwrap(), empty);
}

fn schema_error(doc: &str) -> (String, String) {
    match import_forest(doc) {
        Err(IoError::Schema { node, reason }) => (node, reason),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn missing_right_child_names_node() {
    let doc = r#"{"input_dim": 1, "output_dim": 1, "trees": [
      {"leaf": {"value": [0.0]}},
      {"split": {"feature": 0, "threshold": 0.5,
                 "left": {"split": {"feature": 0, "threshold": 0.2, "left": {"leaf": {"value": [1.0]}}}},
                 "right": {"leaf": {"value": [1.0]}}}}]}"#;
    let (node, reason) = schema_error(doc);
    assert_eq!(node, "trees[1]/left");
    assert!(reason.contains("right"), "{reason}");
}

#[test]
fn malformed_documents_are_rejected_with_node() {
    let bad_dim = ONE_SPLIT.replace("[1.0]", "[1.0, 2.0]");
    assert_eq!(schema_error(&bad_dim).0, "trees[0]/right");
    let bad_feature = ONE_SPLIT.replace("\"feature\": 0", "\"feature\": 3");
    assert_eq!(schema_error(&bad_feature).0, "trees[0]");
    let no_threshold = ONE_SPLIT.replace("\"threshold\": 0.5,", "");
    assert!(schema_error(&no_threshold).1.contains("threshold"));
    let both = r#"{"input_dim": 1, "output_dim": 1, "trees": [{"leaf": {"value": [0]}, "split": {}}]}"#;
    assert_eq!(schema_error(both).0, "trees[0]");
    assert!(matches!(import_forest("{not json"), Err(IoError::Json(_))));
    assert!(matches!(import_forest(&ONE_SPLIT.replace("0.5", "1e999")), Err(IoError::Json(_) | IoError::Schema { .. })));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = seeded_rng(4);
    let net = EmbeddingNet::random(3, &[16, 8, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
    assert_eq!(net.layers().len(), 3);
    let doc = export_embedding(&net);
    assert_eq!(import_embedding(&doc).unwrap(), net);
    let id = EmbeddingNet::identity(5);
    assert_eq!(import_embedding(&export_embedding(&id)).unwrap(), id);
    let bad = doc.replacen("\"relu\"", "\"swish\"", 1);
    assert!(matches!(import_embedding(&bad), Err(IoError::Schema { node, .. }) if node == "layers[0]"));
}

#[test]
fn csv_with_header_and_round_trip() {
    let ds = parse_csv("a,b,label\n0.1,0.2,1\n0.3,0.4,0\n0.5,0.6,1\n", &CsvSchema::default()).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.features[2], vec![0.5, 0.6]);
    assert_eq!(ds.feature_names.as_deref(), Some(&["a".to_string(), "b".to_string()][..]));

    let data = generate(&SyntheticSpec { kind: SyntheticKind::TwoSpirals, n: 200, noise: 0.0, seed: 2 }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, format_csv(&data)).unwrap();
    let back = load_csv(&path, &CsvSchema::default()).unwrap();
    assert_eq!(back.features, data.features);
    assert_eq!(back.labels, data.labels);
}

#[test]
fn csv_errors_cite_row_and_column() {
    let text = "x1,x2,x3,label\n0.1,0.2,abc,1\n";
    match parse_csv(text, &CsvSchema::default()) {
        Err(IoError::Csv { row, column, .. }) => assert_eq!((row, column), (2, 3)),
        other => panic!("{other:?}"),
    }
    match parse_csv("1,2,3\n4,5\n", &CsvSchema { has_header: false, ..CsvSchema::default() }) {
        Err(IoError::Csv { row, .. }) => assert_eq!(row, 2),
        other => panic!("{other:?}"),
    }
    let missing = load_csv(std::path::Path::new("/nonexistent/data.csv"), &CsvSchema::default()).unwrap_err();
    assert!(missing.to_string().contains("/nonexistent/data.csv"));
}

#[test]
fn csv_schema_selects_columns() {
    let schema = CsvSchema { has_header: false, label_column: Some(0), feature_columns: Some(vec![2]) };
    let ds = parse_csv("1,7,0.25\n0,8,0.75\n", &schema).unwrap();
    assert_eq!(ds.labels, vec![1.0, 0.0]);
    assert_eq!(ds.features, vec![vec![0.25], vec![0.75]]);
}

#[test]
fn delta_format_matches_relative_convention() {
    assert_eq!(format_delta(0.8436, 0.8908), "+5.6%");
    assert_eq!(format_delta(0.5, 0.45), "-10.0%");
    assert_eq!(comparison_row(0.8436, 0.8908), "0.8436 & 0.8908 & +5.6%");
}

#[test]
fn constant_forest_gives_uniform_image() {
    let f = Forest::new(2, 1, vec![Tree::leaf(vec![0.3])]).unwrap();
    let spec = GridSpec { resolution: 8, ..GridSpec::default() };
    for sigma in [0.0, 0.1] {
        let g = evaluate_grid(&f, sigma, &spec).unwrap();
        assert_eq!(total_variation(&g.values), 0.0);
        let pgm = to_pgm(&g);
        assert!(pgm.starts_with("P2\n8 8\n255\n"));
        assert!(pgm.lines().skip(3).all(|l| l.split(' ').all(|p| p == "255")));
    }
}

#[test]
fn exact_panel_matches_forest_and_darker_is_larger() {
    let mut rng = seeded_rng(8);
    let f = generate_random_forest(3, 2, 3, LeafInit::Uniform01, 1, &mut rng).unwrap();
    let spec = GridSpec { resolution: 20, ..GridSpec::default() };
    let g = evaluate_grid(&f, 0.0, &spec).unwrap();
    for (r, y) in g.ys.iter().enumerate() {
        for (c, x) in g.xs.iter().enumerate() {
            assert_eq!(g.values[r][c], f.evaluate(&[*x, *y]).unwrap()[0]);
        }
    }
    let flat: Vec<f64> = g.values.iter().flatten().copied().collect();
    let pixels: Vec<u32> = to_pgm(&g).lines().skip(3).flat_map(|l| l.split(' ').map(|p| p.parse().unwrap()).collect::<Vec<u32>>()).collect();
    let argmax = flat.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let argmin = flat.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!((pixels[argmax], pixels[argmin]), (0, 255));
    assert_eq!(to_csv(&g).lines().count(), 401);
}

#[test]
fn profile_and_dimension_limits() {
    let f1 = Forest::new(1, 1, vec![Tree::split(0, 0.5, Tree::leaf(vec![0.0]), Tree::leaf(vec![1.0]))]).unwrap();
    let g = evaluate_grid(&f1, 0.1, &GridSpec { resolution: 10, ..GridSpec::default() }).unwrap();
    assert_eq!(g.values.len(), 1);
    assert!(g.values[0].windows(2).all(|w| w[0] < w[1]));
    assert!(to_csv(&g).starts_with("x,value\n"));
    let f3 = Forest::new(3, 1, vec![]).unwrap();
    assert!(evaluate_grid(&f3, 0.0, &GridSpec::default()).is_err());
}

#[test]
fn metrics_log_has_one_record_per_epoch() {
    let m = |epoch| EpochMetrics { epoch, sigma: 0.015, train_loss: 0.5, valid_loss: 0.25, valid_accuracy: Some(0.75) };
    let h = TrainHistory { initial: m(0), epochs: vec![m(0), m(1)], best_epoch: Some(1) };
    let log = metrics_log(&h);
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1], r#"{"epoch":1,"sigma":0.015,"train_loss":0.5,"valid_loss":0.25,"valid_accuracy":0.75}"#);
}
