//! The two training pipelines: an embedding learned from scratch against a
//! random forest with trainable leaves, and an adapter fine-tuned through a
//! frozen boosted forest.

use smoothforest_core::datasets::{holdout, rotated_embeddings, split, Dataset, RotatedEmbeddingSpec};
use smoothforest_core::forest::{generate_random_forest, train_boosted_forest, BoostConfig, Forest, LeafInit};
use smoothforest_core::neural::{Activation, AdamConfig, EmbeddingNet, Layer, LossKind};
use smoothforest_core::smoothing::PerturbationSpec;
use smoothforest_core::training::{evaluate, fit, Model, SigmaSchedule, TrainConfig, TrainHistory};
use smoothforest_core::{seeded_rng, Error, Result};

/// Loss for labels `0..classes`: one logit for two classes, softmax otherwise.
pub fn classification_loss(classes: usize) -> LossKind {
    if classes <= 2 {
        LossKind::SigmoidCrossEntropy
    } else {
        LossKind::SoftmaxCrossEntropy { classes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScratchConfig {
    pub trees: usize,
    pub depth: usize,
    pub leaf_init: LeafInit,
    /// Widths of the embedding layers; the last is the forest's input dimension.
    pub layers: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub sigma: SigmaSchedule,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Share of the training rows held out for early stopping.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for ScratchConfig {
    fn default() -> Self {
        ScratchConfig {
            trees: 32,
            depth: 4,
            leaf_init: LeafInit::Binary01,
            layers: vec![1],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
            sigma: SigmaSchedule::Fixed(0.015),
            batch_size: 512,
            learning_rate: 0.01,
            epochs: 150,
            patience: 20,
            valid_fraction: 0.1,
            seed: 0,
        }
    }
}

impl ScratchConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            sigma_schedule: self.sigma,
            adam: AdamConfig::with_lr(self.learning_rate),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub model: Model,
    pub history: TrainHistory,
    /// Hard-mode test accuracy before and after training.
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

/// Embedding and random forest with trainable leaves, seeded by `config.seed`.
pub fn scratch_model(input_dim: usize, classes: usize, config: &ScratchConfig) -> Result<Model> {
    let loss = classification_loss(classes);
    let width = *config.layers.last().ok_or_else(|| Error::InvalidArgument("at least one layer is required".into()))?;
    let mut rng = seeded_rng(config.seed);
    let embed =
        EmbeddingNet::random(input_dim, &config.layers, config.hidden_activation, config.output_activation, &mut rng)?;
    let forest =
        generate_random_forest(config.trees, width, config.depth, config.leaf_init, loss.output_dim(), &mut rng)?;
    let sigma = first_sigma(config.sigma)?;
    Model::new(embed, forest, sigma, loss, true)
}

fn first_sigma(schedule: SigmaSchedule) -> Result<PerturbationSpec> {
    PerturbationSpec::new(match schedule {
        SigmaSchedule::Fixed(s) => s,
        SigmaSchedule::Linear { start, .. } | SigmaSchedule::Exponential { start, .. } => start,
    })
}

/// Trains [`scratch_model`] on `train`, holding out part of it for early stopping.
pub fn train_from_scratch(train: &Dataset, test: &Dataset, config: &ScratchConfig) -> Result<Outcome> {
    let classes = train.num_classes().max(test.num_classes());
    let mut model = scratch_model(train.dim(), classes, config)?;
    let (fit_set, valid) = holdout(train, config.valid_fraction, config.seed)?;
    let initial_accuracy = accuracy(&model, test)?;
    let history = fit(&mut model, &fit_set, &valid, &config.train_config())?;
    let final_accuracy = accuracy(&model, test)?;
    Ok(Outcome { model, history, initial_accuracy, final_accuracy })
}

pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    evaluate(model, data, true)?
        .accuracy
        .ok_or_else(|| Error::InvalidArgument("accuracy needs a classification loss".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    /// Used only when no forest is supplied.
    pub boost: BoostConfig,
    pub sigma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            boost: BoostConfig { num_trees: 16, max_depth: 3, ..BoostConfig::default() },
            sigma: 0.02,
            batch_size: 128,
            learning_rate: 3e-3,
            epochs: 60,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub outcome: Outcome,
    /// The frozen forest as it entered fine-tuning.
    pub forest: Forest,
    /// Whether a supplied forest had trainable leaves that were frozen.
    pub froze_leaves: bool,
}

/// Fits a linear adapter, initialised to the identity, in front of a frozen
/// forest. Without a forest, one is boosted on `train` first.
pub fn finetune(
    train: &Dataset,
    valid: &Dataset,
    test: &Dataset,
    forest: Option<Forest>,
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let dim = train.dim();
    let classes = train.num_classes().max(test.num_classes());
    let loss = classification_loss(classes);
    let mut forest = match forest {
        Some(f) => f,
        None => train_boosted_forest(train, &BoostConfig { loss, ..config.boost.clone() })?,
    };
    if forest.input_dim() != dim {
        return Err(Error::DimensionMismatch { expected: forest.input_dim(), got: dim });
    }
    let froze_leaves = forest.leaf_ids().iter().any(|&id| forest.leaf(id).is_some_and(|l| l.trainable));
    forest.set_all_trainable(false);

    let embed = EmbeddingNet::new(dim, vec![Layer::identity(dim, Activation::Identity)])?;
    let mut model = Model::new(embed, forest.clone(), PerturbationSpec::new(config.sigma)?, loss, false)?;
    let initial_accuracy = accuracy(&model, test)?;
    let train_config = TrainConfig {
        batch_size: config.batch_size,
        epochs: config.epochs,
        patience: config.patience,
        sigma_schedule: SigmaSchedule::Fixed(config.sigma),
        adam: AdamConfig::with_lr(config.learning_rate),
        seed: config.seed,
    };
    let history = fit(&mut model, train, valid, &train_config)?;
    let final_accuracy = accuracy(&model, test)?;
    Ok(FinetuneOutcome { outcome: Outcome { model, history, initial_accuracy, final_accuracy }, forest, froze_leaves })
}

/// Synthetic stand-in for pre-trained sentence embeddings: 6000 rows of
/// rotated, squashed 8-dimensional features split 75/12.5/12.5.
pub fn embedding_scenario(seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let data = rotated_embeddings(&RotatedEmbeddingSpec { n: 6000, dim: 8, gain: 4.0, seed })?;
    split(&data, (0.75, 0.125, 0.125), seed)
}
