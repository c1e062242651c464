use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use smoothforest::checkpoint::{read_embedding, write_embedding};
use smoothforest::csv_io::{load_csv, write_csv, CsvSchema};
use smoothforest::experiments::{
    classification_loss, finetune, train_from_scratch, FinetuneConfig, ScratchConfig,
};
use smoothforest::forest_json::{read_forest, write_forest};
use smoothforest::heatmap::{evaluate_grid, to_csv, to_pgm, total_variation, GridSpec, DEFAULT_SIGMAS};
use smoothforest::metrics::metrics_log;
use smoothforest::report::{comparison_row, format_delta};
use smoothforest_core::datasets::{generate, rotated_embeddings, split, RotatedEmbeddingSpec, SyntheticKind, SyntheticSpec};
use smoothforest_core::forest::{generate_random_forest, BoostConfig, LeafInit};
use smoothforest_core::neural::{Activation, EmbeddingNet, LossKind};
use smoothforest_core::oracle::gradcheck_model;
use smoothforest_core::seeded_rng;
use smoothforest_core::smoothing::PerturbationSpec;
use smoothforest_core::training::{evaluate, Model, SigmaSchedule};

#[derive(Parser)]
#[command(name = "smoothforest", version, about = "Train embeddings through Gaussian-smoothed decision forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Train an embedding and the leaves of a random forest from scratch.
    Train(TrainArgs),
    /// Fine-tune a linear adapter through a frozen forest.
    Finetune(FinetuneArgs),
    /// Render a forest over a grid at several perturbation scales.
    Heatmap(HeatmapArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Report accuracy or mean squared error of a saved model.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// identity_line, xor_quadrants, concentric_circles, two_spirals,
    /// gaussian_blobs[:K], or rotated_embeddings.
    #[arg(long)]
    kind: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, env = "SMOOTHFOREST_SEED", default_value_t = 0)]
    seed: u64,
    /// Label flip probability.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Width of rotated_embeddings rows.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LeafInitArg {
    Binary01,
    Uniform01,
    Zero,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Fixed,
    Linear,
    Exponential,
}

#[derive(Args)]
struct SigmaArgs {
    /// Perturbation standard deviation (the start value for annealing schedules).
    #[arg(long, default_value_t = 0.015)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Fixed)]
    schedule: ScheduleArg,
    /// Final sigma of the linear schedule.
    #[arg(long)]
    sigma_end: Option<f64>,
    /// Per-epoch factor of the exponential schedule.
    #[arg(long, default_value_t = 0.98)]
    decay: f64,
}

impl SigmaArgs {
    fn schedule(&self) -> Result<SigmaSchedule> {
        Ok(match self.schedule {
            ScheduleArg::Fixed => SigmaSchedule::Fixed(self.sigma),
            ScheduleArg::Linear => SigmaSchedule::Linear {
                start: self.sigma,
                end: self.sigma_end.context("--schedule linear needs --sigma-end")?,
            },
            ScheduleArg::Exponential => SigmaSchedule::Exponential { start: self.sigma, decay: self.decay },
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 32)]
    trees: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, value_enum, default_value_t = LeafInitArg::Binary01)]
    leaf_init: LeafInitArg,
    /// Comma-separated layer widths; the last is the embedding dimension.
    #[arg(long, default_value = "1")]
    layers: String,
    #[arg(long, default_value = "relu")]
    hidden_activation: String,
    #[arg(long, default_value = "sigmoid")]
    output_activation: String,
    #[command(flatten)]
    sigma: SigmaArgs,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, env = "SMOOTHFOREST_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for forest.json, embedding.json and metrics.ndjson.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Embedding table with the label in the last column.
    #[arg(long)]
    data: PathBuf,
    /// Frozen forest; boosted on the training rows when omitted.
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    boost_trees: usize,
    #[arg(long, default_value_t = 3)]
    boost_depth: usize,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, env = "SMOOTHFOREST_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for forest.json, adapter.json and metrics.ndjson.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long, conflicts_with = "random_trees")]
    forest: Option<PathBuf>,
    /// Render a seeded random forest with this many trees instead.
    #[arg(long)]
    random_trees: Option<usize>,
    #[arg(long, default_value_t = 2)]
    input_dim: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, env = "SMOOTHFOREST_SEED", default_value_t = 0)]
    seed: u64,
    /// Comma-separated scales; 0 renders the exact forest.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIGMAS)]
    sigmas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    #[arg(long, default_value_t = 0.0)]
    lower: f64,
    #[arg(long, default_value_t = 1.0)]
    upper: f64,
    /// Output path prefix; `_sigma<value>.pgm` and `.csv` are appended.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelPaths {
    #[arg(long)]
    forest: Option<PathBuf>,
    /// Embedding checkpoint; identity when omitted.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    model: ModelPaths,
    /// Check a seeded random model instead of saved files.
    #[arg(long, conflicts_with = "forest")]
    random: bool,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 4)]
    cases: usize,
    #[arg(long, env = "SMOOTHFOREST_SEED", default_value_t = 0)]
    seed: u64,
    /// Where to write the full report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Classification,
    Regression,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelPaths,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "smooth")]
    hard: bool,
    #[arg(long)]
    smooth: bool,
    #[arg(long, default_value_t = 0.015)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = Task::Classification)]
    task: Task,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(&a),
        Command::Train(a) => train(&a),
        Command::Finetune(a) => finetune_cmd(&a),
        Command::Heatmap(a) => heatmap(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Eval(a) => eval(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn check_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => bail!("directory {} does not exist", p.display()),
        _ => Ok(()),
    }
}

fn gen_data(a: &GenDataArgs) -> Result<ExitCode> {
    check_parent(&a.out)?;
    let n = a.n as usize;
    let data = if a.kind == "rotated_embeddings" {
        rotated_embeddings(&RotatedEmbeddingSpec { n, dim: a.dim, gain: 4.0, seed: a.seed })?
    } else {
        generate(&SyntheticSpec { kind: SyntheticKind::from_name(&a.kind)?, n, noise: a.noise, seed: a.seed })?
    };
    write_csv(&a.out, &data)?;
    println!("rows={}", data.len());
    Ok(ExitCode::SUCCESS)
}

fn parse_layers(s: &str) -> Result<Vec<usize>> {
    let layers = s
        .split(',')
        .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad layer width {w:?}")))
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() || layers.contains(&0) {
        bail!("layer widths must be positive");
    }
    Ok(layers)
}

fn activation(name: &str) -> Result<Activation> {
    Activation::from_name(name).with_context(|| format!("unknown activation {name:?}"))
}

fn train(a: &TrainArgs) -> Result<ExitCode> {
    let train = load_csv(&a.train, &CsvSchema::default())?;
    let test = load_csv(&a.test, &CsvSchema::default())?;
    ensure_dir(&a.out)?;
    let config = ScratchConfig {
        trees: a.trees,
        depth: a.depth,
        leaf_init: match a.leaf_init {
            LeafInitArg::Binary01 => LeafInit::Binary01,
            LeafInitArg::Uniform01 => LeafInit::Uniform01,
            LeafInitArg::Zero => LeafInit::Zero,
        },
        layers: parse_layers(&a.layers)?,
        hidden_activation: activation(&a.hidden_activation)?,
        output_activation: activation(&a.output_activation)?,
        sigma: a.sigma.schedule()?,
        batch_size: a.batch,
        learning_rate: a.lr,
        epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        ..ScratchConfig::default()
    };
    let outcome = train_from_scratch(&train, &test, &config)?;
    let (embed, forest) = outcome.model.clone().into_parts();
    write_forest(&a.out.join("forest.json"), &forest)?;
    write_embedding(&a.out.join("embedding.json"), &embed)?;
    fs::write(a.out.join("metrics.ndjson"), metrics_log(&outcome.history))?;
    println!("layers={}", embed.layers().len());
    println!("sigma={}", outcome.model.perturb.sigma());
    println!("initial_test_accuracy={:.4}", outcome.initial_accuracy);
    println!("test_accuracy={:.4}", outcome.final_accuracy);
    Ok(ExitCode::SUCCESS)
}

fn finetune_cmd(a: &FinetuneArgs) -> Result<ExitCode> {
    let data = load_csv(&a.data, &CsvSchema::default())?;
    let forest = a.forest.as_deref().map(read_forest).transpose()?;
    ensure_dir(&a.out)?;
    let (train, valid, test) = split(&data, (0.75, 0.125, 0.125), a.seed)?;
    let config = FinetuneConfig {
        boost: BoostConfig { num_trees: a.boost_trees, max_depth: a.boost_depth, ..BoostConfig::default() },
        sigma: a.sigma,
        batch_size: a.batch,
        learning_rate: a.lr,
        epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
    };
    let result = finetune(&train, &valid, &test, forest, &config)?;
    if result.froze_leaves {
        eprintln!("warning: the supplied forest had trainable leaves; they were frozen for fine-tuning");
    }
    let o = &result.outcome;
    write_forest(&a.out.join("forest.json"), &result.forest)?;
    write_embedding(&a.out.join("adapter.json"), &o.model.embed)?;
    fs::write(a.out.join("metrics.ndjson"), metrics_log(&o.history))?;
    println!("initial_accuracy={:.4}", o.initial_accuracy);
    println!("finetuned_accuracy={:.4}", o.final_accuracy);
    println!("delta={}", format_delta(o.initial_accuracy, o.final_accuracy));
    println!("{}", comparison_row(o.initial_accuracy, o.final_accuracy));
    Ok(ExitCode::SUCCESS)
}

fn heatmap(a: &HeatmapArgs) -> Result<ExitCode> {
    check_parent(&a.out)?;
    let forest = match (&a.forest, a.random_trees) {
        (Some(p), _) => read_forest(p)?,
        (None, Some(n)) => generate_random_forest(n, a.input_dim, a.depth, LeafInit::Uniform01, 1, &mut seeded_rng(a.seed))?,
        (None, None) => bail!("pass --forest or --random-trees"),
    };
    let spec = GridSpec { resolution: a.resolution, lower: a.lower, upper: a.upper };
    for &sigma in &a.sigmas {
        if sigma < 0.0 {
            bail!("sigma must be non-negative, got {sigma}");
        }
        let grid = evaluate_grid(&forest, sigma, &spec)?;
        let stem = format!("{}_sigma{sigma}", a.out.display());
        fs::write(format!("{stem}.pgm"), to_pgm(&grid))?;
        fs::write(format!("{stem}.csv"), to_csv(&grid))?;
        println!("sigma={sigma} total_variation={:.6}", total_variation(&grid.values));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_model(paths: &ModelPaths, sigma: f64, loss: Option<LossKind>, task: Task) -> Result<Model> {
    let forest_path = paths.forest.as_ref().context("--forest is required")?;
    let forest = read_forest(forest_path)?;
    let embed = match &paths.embedding {
        Some(p) => read_embedding(p)?,
        None => EmbeddingNet::identity(forest.input_dim()),
    };
    let loss = loss.unwrap_or(match task {
        Task::Regression => LossKind::SquaredError,
        Task::Classification => classification_loss(forest.output_dim().max(2)),
    });
    let trainable = forest.leaf_ids().iter().any(|&id| forest.leaf(id).is_some_and(|l| l.trainable));
    Ok(Model::new(embed, forest, PerturbationSpec::new(sigma)?, loss, trainable)?)
}

fn gradcheck(a: &GradcheckArgs) -> Result<ExitCode> {
    let model = if a.random {
        let mut rng = seeded_rng(a.seed);
        let embed = EmbeddingNet::random(3, &[4, 2], Activation::Tanh, Activation::Sigmoid, &mut rng)?;
        let forest = generate_random_forest(4, 2, 3, LeafInit::Uniform01, 1, &mut rng)?;
        Model::new(embed, forest, PerturbationSpec::new(a.sigma)?, LossKind::SigmoidCrossEntropy, true)?
    } else {
        load_model(&a.model, a.sigma, None, Task::Classification)?
    };
    let report = gradcheck_model(&model, a.cases, a.tolerance, a.seed);
    let text = report.to_string();
    if let Some(p) = &a.report {
        fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    print!("{text}");
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn eval(a: &EvalArgs) -> Result<ExitCode> {
    let data = load_csv(&a.data, &CsvSchema::default())?;
    let model = load_model(&a.model, a.sigma, None, a.task)?;
    let metrics = evaluate(&model, &data, !a.smooth)?;
    match (metrics.accuracy, metrics.mse) {
        (Some(acc), _) => println!("accuracy={acc:.4}"),
        (_, Some(mse)) => println!("mse={mse:.6}"),
        _ => unreachable!("evaluate reports one metric"),
    }
    println!("loss={:.6}", metrics.loss);
    Ok(ExitCode::SUCCESS)
}
