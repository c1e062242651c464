//! Acceptance checks. Each test prints one `criterion N ... PASS|FAIL` line
//! and then asserts it. Tolerances and runtime limits are pinned below.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::Rng;
use smoothforest::checkpoint::export_embedding;
use smoothforest::experiments::{embedding_scenario, finetune, train_from_scratch, FinetuneConfig, Outcome, ScratchConfig};
use smoothforest::forest_json::export_forest;
use smoothforest::heatmap::{evaluate_grid, total_variation, GridSpec};
use smoothforest::metrics::metrics_log;
use smoothforest::report::{format_delta, relative_change};
use smoothforest_core::datasets::{generate, SyntheticKind, SyntheticSpec};
use smoothforest_core::forest::{extract_leaf_regions, generate_random_forest, Forest, LeafInit, Node};
use smoothforest_core::neural::{Activation, EmbeddingNet, LossKind};
use smoothforest_core::oracle::{finite_diff_gradient, gradcheck_model, mc_expectation, relative_error, ParamClass};
use smoothforest_core::seeded_rng;
use smoothforest_core::smoothing::{smoothed_evaluate, PerturbationSpec, SmoothForest};
use smoothforest_core::training::Model;

const GRAD_TOL: f64 = 1e-4;
const INPUT_GRAD_TOL: f64 = 1e-5;
const GRAD_CONFIGS: usize = 100;
const MC_CONFIGS: usize = 20;
const MC_SAMPLES: usize = 1_000_000;
const MC_STDERRS: f64 = 4.0;
const MASS_TOL: f64 = 1e-9;
const HARD_SIGMA: f64 = 1e-6;
const HARD_TOL: f64 = 1e-9;
const HARD_POINTS: usize = 10_000;
const HARD_MARGIN: f64 = 1e-3;
const LINE_ACCURACY: f64 = 0.98;
const LINE_WEIGHT_RATIO: f64 = 0.15;
const PATTERN_ACCURACY: f64 = 0.95;
const UNTRAINED_CEILING: f64 = 0.65;
const FINETUNE_GAIN: f64 = 0.05;
const HEATMAP_RESOLUTION: usize = 200;

/// Serialises the expensive criteria so their runtimes are measured alone.
fn heavy() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} [{name}]: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} [{name}] failed: {detail}");
}

/// One random configuration of the gradient criterion.
struct GradConfig {
    model: Model,
    spec: PerturbationSpec,
    seed: u64,
}

fn grad_config(seed: u64) -> GradConfig {
    let mut rng = seeded_rng(10_000 + seed);
    let trees = rng.random_range(1..=16);
    let depth = rng.random_range(1..=6);
    let d = [1, 2, 5, 10][rng.random_range(0..4)];
    let sigma = rng.random_range(0.01..=0.5);
    let loss = match rng.random_range(0..3) {
        0 => LossKind::SigmoidCrossEntropy,
        1 => LossKind::SoftmaxCrossEntropy { classes: 3 },
        _ => LossKind::SquaredError,
    };
    let raw = rng.random_range(1..=4);
    let embed = EmbeddingNet::random(raw, &[4, d], Activation::Tanh, Activation::Sigmoid, &mut rng).unwrap();
    let forest = generate_random_forest(trees, d, depth, LeafInit::Uniform01, loss.output_dim(), &mut rng).unwrap();
    let spec = PerturbationSpec::new(sigma).unwrap();
    GradConfig { model: Model::new(embed, forest, spec, loss, true).unwrap(), spec, seed }
}

/// Central differences of the smoothed forest itself, step scaled to sigma.
fn forest_input_rel_err(forest: &Forest, mu: &[f64], spec: PerturbationSpec) -> f64 {
    let sf = SmoothForest::new(forest).unwrap();
    let analytic = sf.input_jacobian(forest, mu, spec).unwrap();
    let h = smoothforest_core::oracle::H_REL * spec.sigma();
    let numeric = finite_diff_gradient(|x| Ok(sf.evaluate(forest, x, spec)?.value), mu, h).unwrap();
    let mut worst = 0.0f64;
    for (ra, rn) in analytic.iter().zip(&numeric) {
        for (a, n) in ra.iter().zip(rn) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    worst
}

#[test]
fn criterion_1_gradient_fidelity() {
    let _g = heavy();
    let start = Instant::now();
    let (mut max_all, mut max_input, mut checked) = (0.0f64, 0.0f64, 0usize);
    let mut worst = String::new();
    for seed in 0..GRAD_CONFIGS as u64 {
        let c = grad_config(seed);
        let report = gradcheck_model(&c.model, 2, GRAD_TOL, c.seed);
        assert!(report.note.is_none(), "config {seed}: {report}");
        checked += report.entries.len();
        if report.max_rel_err > max_all {
            max_all = report.max_rel_err;
            worst = format!("config {seed} {}", report.worst().unwrap().name);
        }
        max_input = max_input.max(report.max_rel_err_for(ParamClass::Input));
        for class in [ParamClass::EmbeddingWeight, ParamClass::EmbeddingBias, ParamClass::Leaf] {
            assert!(report.entries.iter().any(|e| e.class == class), "config {seed} skipped {class:?}");
        }
        let mut rng = seeded_rng(20_000 + seed);
        let forest = c.model.forest();
        for _ in 0..2 {
            let mu: Vec<f64> = (0..forest.input_dim()).map(|_| rng.random::<f64>()).collect();
            max_input = max_input.max(forest_input_rel_err(forest, &mu, c.spec));
        }
    }
    let elapsed = start.elapsed();
    let pass = max_all <= GRAD_TOL && max_input <= INPUT_GRAD_TOL && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "gradient fidelity",
        pass,
        &format!(
            "{GRAD_CONFIGS} configs, {checked} entries, max rel err {max_all:.2e} (tol {GRAD_TOL:e}, worst {worst}), \
             input max rel err {max_input:.2e} (tol {INPUT_GRAD_TOL:e}), {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_expectation_fidelity() {
    let _g = heavy();
    let start = Instant::now();
    let mut worst_z = 0.0f64;
    for seed in 0..MC_CONFIGS as u64 {
        let mut rng = seeded_rng(30_000 + seed);
        let trees = rng.random_range(1..=8);
        let depth = rng.random_range(1..=4);
        let d = [1, 2, 5][rng.random_range(0..3)];
        let c = rng.random_range(1..=2);
        let sigma = rng.random_range(0.05..=0.5);
        let forest = generate_random_forest(trees, d, depth, LeafInit::Uniform01, c, &mut rng).unwrap();
        let mu: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let exact = smoothed_evaluate(&forest, &mu, PerturbationSpec::new(sigma).unwrap()).unwrap().value;
        let est = mc_expectation(&forest, &mu, sigma, MC_SAMPLES, seed).unwrap();
        for ((m, s), e) in est.mean.iter().zip(&est.stderr).zip(&exact[..c]) {
            let diff = (m - e).abs();
            let z = if *s > 0.0 { diff / s } else if diff < 1e-12 { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_z <= MC_STDERRS && elapsed < Duration::from_secs(120);
    verdict(
        2,
        "expectation fidelity",
        pass,
        &format!(
            "{MC_CONFIGS} configs x {MC_SAMPLES} samples, worst |mc - closed form| = {worst_z:.2} stderr \
             (limit {MC_STDERRS}), {:.1}s (limit 120s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_3_mass_normalization() {
    let mut worst = 0.0f64;
    for seed in 0..GRAD_CONFIGS as u64 {
        let c = grad_config(seed);
        let forest = c.model.forest();
        let mut rng = seeded_rng(40_000 + seed);
        for _ in 0..3 {
            // includes points outside the unit cube
            let mu: Vec<f64> = (0..forest.input_dim()).map(|_| rng.random_range(-0.5..1.5)).collect();
            let sv = smoothed_evaluate(forest, &mu, c.spec).unwrap();
            let mut per_tree = vec![0.0; forest.trees().len()];
            for (id, m) in &sv.per_leaf_mass {
                per_tree[id.tree] += m;
            }
            for s in per_tree {
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    verdict(
        3,
        "mass normalization",
        worst <= MASS_TOL,
        &format!("max |sum of masses - 1| = {worst:.2e} over every tree of {GRAD_CONFIGS} configs (tol {MASS_TOL:e})"),
    );
}

#[test]
fn criterion_4_hard_limit() {
    let mut rng = seeded_rng(50_000);
    let forest = generate_random_forest(16, 2, 5, LeafInit::Uniform01, 2, &mut rng).unwrap();
    let thresholds: Vec<(usize, f64)> = forest
        .trees()
        .iter()
        .flat_map(|t| t.nodes().iter())
        .filter_map(|n| match n {
            Node::Split(s) => Some((s.feature, s.threshold)),
            Node::Leaf(_) => None,
        })
        .collect();
    let sf = SmoothForest::new(&forest).unwrap();
    let spec = PerturbationSpec::new(HARD_SIGMA).unwrap();
    let (mut worst, mut accepted, mut drawn) = (0.0f64, 0usize, 0usize);
    while accepted < HARD_POINTS {
        drawn += 1;
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        if thresholds.iter().any(|&(f, t)| (x[f] - t).abs() < HARD_MARGIN) {
            continue;
        }
        accepted += 1;
        let exact = forest.evaluate(&x).unwrap();
        let smooth = sf.evaluate(&forest, &x, spec).unwrap().value;
        for (a, b) in exact.iter().zip(&smooth) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        4,
        "hard-limit consistency",
        worst <= HARD_TOL,
        &format!(
            "sigma {HARD_SIGMA:e}, {HARD_POINTS} points >= {HARD_MARGIN:e} from {} thresholds ({drawn} drawn), \
             max |smooth - exact| = {worst:.2e} (tol {HARD_TOL:e})",
            thresholds.len()
        ),
    );
}

/// Bytes whose equality defines a reproducible run.
#[derive(Debug, PartialEq)]
struct Artifacts {
    metrics: String,
    embedding: String,
    forest: String,
}

struct Run {
    outcome: Outcome,
    artifacts: Artifacts,
    elapsed: Duration,
    /// Frozen forest as it entered fine-tuning, for the fine-tuning run.
    frozen: Option<Forest>,
}

fn artifacts(o: &Outcome) -> Artifacts {
    Artifacts {
        metrics: metrics_log(&o.history),
        embedding: export_embedding(&o.model.embed),
        forest: export_forest(o.model.forest()),
    }
}

fn identity_line_config() -> ScratchConfig {
    // a single linear neuron
    ScratchConfig { layers: vec![1], output_activation: Activation::Identity, epochs: 100, seed: 0, ..ScratchConfig::default() }
}

fn pattern_config() -> ScratchConfig {
    ScratchConfig {
        layers: vec![16, 8],
        hidden_activation: Activation::Relu,
        output_activation: Activation::Sigmoid,
        epochs: 150,
        seed: 0,
        ..ScratchConfig::default()
    }
}

fn scratch_run(kind: SyntheticKind, config: &ScratchConfig) -> Run {
    let _g = heavy();
    let start = Instant::now();
    let train = generate(&SyntheticSpec { kind, n: 5000, noise: 0.0, seed: 1 }).unwrap();
    let test = generate(&SyntheticSpec { kind, n: 500, noise: 0.0, seed: 2 }).unwrap();
    let outcome = train_from_scratch(&train, &test, config).unwrap();
    let elapsed = start.elapsed();
    Run { artifacts: artifacts(&outcome), outcome, elapsed, frozen: None }
}

fn finetune_run() -> Run {
    let _g = heavy();
    let start = Instant::now();
    let (train, valid, test) = embedding_scenario(0).unwrap();
    let r = finetune(&train, &valid, &test, None, &FinetuneConfig::default()).unwrap();
    let elapsed = start.elapsed();
    Run { artifacts: artifacts(&r.outcome), outcome: r.outcome, elapsed, frozen: Some(r.forest) }
}

fn line_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| scratch_run(SyntheticKind::IdentityLine, &identity_line_config()))
}

fn xor_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| scratch_run(SyntheticKind::XorQuadrants, &pattern_config()))
}

fn circles_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| scratch_run(SyntheticKind::ConcentricCircles, &pattern_config()))
}

fn finetune_cached() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(finetune_run)
}

#[test]
fn criterion_5_identity_line() {
    let run = line_run();
    let o = &run.outcome;
    let w = o.model.embed.layers()[0].row(0);
    let ratio = (w[0] + w[1]).abs() / w[0].abs().max(w[1].abs());
    let pass = o.final_accuracy >= LINE_ACCURACY && ratio <= LINE_WEIGHT_RATIO && run.elapsed < Duration::from_secs(120);
    verdict(
        5,
        "identity line",
        pass,
        &format!(
            "test accuracy {:.4} (min {LINE_ACCURACY}), weights ({:.4}, {:.4}) ratio {ratio:.4} (max {LINE_WEIGHT_RATIO}), \
             best epoch {:?}, {:.1}s (limit 120s)",
            o.final_accuracy,
            w[0],
            w[1],
            o.history.best_epoch,
            run.elapsed.as_secs_f64()
        ),
    );
}

fn pattern_verdict(name: &str, run: &Run) -> (bool, String) {
    let o = &run.outcome;
    let pass = o.final_accuracy >= PATTERN_ACCURACY
        && o.initial_accuracy <= UNTRAINED_CEILING
        && run.elapsed < Duration::from_secs(300);
    let detail = format!(
        "{name}: untrained {:.4} (max {UNTRAINED_CEILING}), trained {:.4} (min {PATTERN_ACCURACY}), {:.1}s (limit 300s)",
        o.initial_accuracy,
        o.final_accuracy,
        run.elapsed.as_secs_f64()
    );
    (pass, detail)
}

#[test]
fn criterion_6_nonlinear_patterns() {
    let (p1, d1) = pattern_verdict("xor_quadrants", xor_run());
    let (p2, d2) = pattern_verdict("concentric_circles", circles_run());
    verdict(6, "nonlinear patterns", p1 && p2, &format!("{d1}; {d2}"));
}

#[test]
fn criterion_7_finetuning_trend() {
    let run = finetune_cached();
    let o = &run.outcome;
    let gain = relative_change(o.initial_accuracy, o.final_accuracy);
    let frozen = run.frozen.as_ref().unwrap();
    let identical = o.model.forest() == frozen && export_forest(o.model.forest()) == export_forest(frozen);
    let arithmetic = format_delta(0.8436, 0.8908);
    let pass = gain >= FINETUNE_GAIN && identical && arithmetic == "+5.6%";
    verdict(
        7,
        "fine-tuning trend",
        pass,
        &format!(
            "initial {:.4} -> fine-tuned {:.4} = {} (min +{:.1}%), forest bit-identical {identical}, \
             delta(0.8436, 0.8908) = {arithmetic}, {:.1}s",
            o.initial_accuracy,
            o.final_accuracy,
            format_delta(o.initial_accuracy, o.final_accuracy),
            FINETUNE_GAIN * 100.0,
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_8_smoothing_monotonicity() {
    let mut rng = seeded_rng(80_000);
    let forest = generate_random_forest(2, 2, 4, LeafInit::Uniform01, 1, &mut rng).unwrap();
    assert!(forest.trees().iter().all(|t| extract_leaf_regions(t).is_ok()));
    let spec = GridSpec { resolution: HEATMAP_RESOLUTION, ..GridSpec::default() };
    let tv: Vec<f64> = [0.05, 0.10, 0.15]
        .iter()
        .map(|&s| total_variation(&evaluate_grid(&forest, s, &spec).unwrap().values))
        .collect();
    let exact = total_variation(&evaluate_grid(&forest, 0.0, &spec).unwrap().values);
    let pass = tv[0] > tv[1] && tv[1] > tv[2];
    verdict(
        8,
        "smoothing monotonicity",
        pass,
        &format!(
            "{HEATMAP_RESOLUTION}x{HEATMAP_RESOLUTION} total variation: exact {exact:.4}, sigma 0.05 {:.4}, 0.10 {:.4}, 0.15 {:.4}",
            tv[0], tv[1], tv[2]
        ),
    );
}

#[test]
fn criterion_9_determinism() {
    let pairs = [
        ("identity line", line_run(), scratch_run(SyntheticKind::IdentityLine, &identity_line_config())),
        ("xor_quadrants", xor_run(), scratch_run(SyntheticKind::XorQuadrants, &pattern_config())),
        ("concentric_circles", circles_run(), scratch_run(SyntheticKind::ConcentricCircles, &pattern_config())),
        ("fine-tuning", finetune_cached(), finetune_run()),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, first, second) in &pairs {
        let same = first.artifacts == second.artifacts && first.outcome.history == second.outcome.history;
        pass &= same;
        details.push(format!("{name} {}", if same { "identical" } else { "DIFFERS" }));
    }
    verdict(9, "determinism", pass, &format!("metrics logs and checkpoints on rerun: {}", details.join(", ")));
}
