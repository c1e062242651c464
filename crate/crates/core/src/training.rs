//! End-to-end model `F ∘ E` and its minibatch training loop.
//!
//! Training minimises the mean loss of the smoothed forest evaluated at the
//! embedding, `1/|D| * sum l(y, F_sigma(E(x)))`, with Adam. Embedding
//! parameters are always trained; leaf values only when the model allows it.
//! Deployment (`hard = true`) runs the plain forest on the embedding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datasets::{batches, Dataset};
use crate::error::{check_input, Error, Result};
use crate::forest::{Forest, LeafId};
use crate::neural::{loss_and_grad, AdamConfig, AdamState, EmbeddingNet, LossKind};
use crate::smoothing::{PerturbationSpec, SmoothForest};

/// A forest over the output of an embedding network.
///
/// The first `tabular` input columns bypass the network and are fed to the
/// forest unchanged, ahead of the embedding dimensions.
#[derive(Debug, Clone)]
pub struct Model {
    pub embed: EmbeddingNet,
    forest: Forest,
    pub perturb: PerturbationSpec,
    pub loss: LossKind,
    pub leaf_trainable: bool,
    tabular: usize,
    regions: SmoothForest,
}

/// Loss and gradients of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGrad {
    pub loss: f64,
    /// In [`Model::params`] order.
    pub params: Vec<f64>,
    /// Gradient with respect to the raw input.
    pub input: Vec<f64>,
}

impl Model {
    pub fn new(
        embed: EmbeddingNet,
        forest: Forest,
        perturb: PerturbationSpec,
        loss: LossKind,
        leaf_trainable: bool,
    ) -> Result<Self> {
        Self::with_tabular(0, embed, forest, perturb, loss, leaf_trainable)
    }

    pub fn with_tabular(
        tabular: usize,
        embed: EmbeddingNet,
        forest: Forest,
        perturb: PerturbationSpec,
        loss: LossKind,
        leaf_trainable: bool,
    ) -> Result<Self> {
        if tabular + embed.output_dim() != forest.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: forest.input_dim(),
                got: tabular + embed.output_dim(),
            });
        }
        if loss.output_dim() != forest.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{loss:?} needs {} outputs but the forest has {}",
                loss.output_dim(),
                forest.output_dim()
            )));
        }
        let regions = SmoothForest::new(&forest)?;
        Ok(Model { embed, forest, perturb, loss, leaf_trainable, tabular, regions })
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn into_parts(self) -> (EmbeddingNet, Forest) {
        (self.embed, self.forest)
    }

    pub fn input_dim(&self) -> usize {
        self.tabular + self.embed.input_dim()
    }

    pub fn tabular_dims(&self) -> usize {
        self.tabular
    }

    fn trainable_leaves(&self) -> Vec<(usize, LeafId)> {
        if !self.leaf_trainable {
            return Vec::new();
        }
        self.forest
            .leaf_ids()
            .into_iter()
            .enumerate()
            .filter(|(_, id)| self.forest.leaf(*id).is_some_and(|l| l.trainable))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.embed.num_params() + self.trainable_leaves().len() * self.forest.output_dim()
    }

    /// Embedding parameters, then each trainable leaf's components.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.embed.params();
        for (_, id) in self.trainable_leaves() {
            p.extend_from_slice(&self.forest.leaf(id).expect("leaf").value);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let ne = self.embed.num_params();
        self.embed.set_params(&params[..ne])?;
        let c = self.forest.output_dim();
        for (k, (_, id)) in self.trainable_leaves().into_iter().enumerate() {
            let leaf = self.forest.leaf_mut(id).expect("leaf");
            leaf.value.copy_from_slice(&params[ne + k * c..ne + (k + 1) * c]);
        }
        Ok(())
    }

    /// Human-readable name of every parameter, in [`Model::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.num_params());
        for (li, l) in self.embed.layers().iter().enumerate() {
            for o in 0..l.out_dim() {
                for i in 0..l.in_dim() {
                    names.push(format!("layer{li}.weight[{o}][{i}]"));
                }
            }
            for o in 0..l.out_dim() {
                names.push(format!("layer{li}.bias[{o}]"));
            }
        }
        for (_, id) in self.trainable_leaves() {
            for c in 0..self.forest.output_dim() {
                names.push(format!("tree{}.leaf{}[{c}]", id.tree, id.node));
            }
        }
        names
    }

    fn forest_input(&self, x: &[f64]) -> Result<(Vec<f64>, crate::neural::ForwardCache)> {
        check_input(x, self.input_dim())?;
        let (e, cache) = self.embed.forward(&x[self.tabular..])?;
        let mut z = Vec::with_capacity(self.forest.input_dim());
        z.extend_from_slice(&x[..self.tabular]);
        z.extend(e);
        Ok((z, cache))
    }

    /// Hard (`true`) uses only axis-aligned comparisons; soft evaluates the
    /// smoothed forest at the model's current sigma.
    pub fn predict(&self, x: &[f64], hard: bool) -> Result<Vec<f64>> {
        let (z, _) = self.forest_input(x)?;
        if hard {
            self.forest.evaluate(&z)
        } else {
            Ok(self.regions.evaluate(&self.forest, &z, self.perturb)?.value)
        }
    }

    pub fn example_loss(&self, x: &[f64], label: f64, hard: bool) -> Result<f64> {
        Ok(loss_and_grad(self.loss, &self.predict(x, hard)?, label)?.0)
    }

    /// Smoothed loss of one example and its gradients.
    pub fn example_grad(&self, x: &[f64], label: f64) -> Result<ExampleGrad> {
        let (z, cache) = self.forest_input(x)?;
        let loss_kind = self.loss;
        let (loss, sg) = self.regions.backward_with(&self.forest, &z, self.perturb, |value| {
            loss_and_grad(loss_kind, value, label)
        })?;
        let (net_grads, embed_input) = self.embed.backward(&cache, &sg.input_grad[self.tabular..])?;

        let mut params = net_grads.flatten();
        if self.leaf_trainable {
            let (_, gout) = loss_and_grad(self.loss, &sg.value, label)?;
            for (k, _) in self.trainable_leaves() {
                params.extend(gout.iter().map(|g| g * sg.leaf_mass[k]));
            }
        }
        let mut input = sg.input_grad[..self.tabular].to_vec();
        input.extend(embed_input);
        Ok(ExampleGrad { loss, params, input })
    }
}

/// Schedule of the perturbation scale over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaSchedule {
    Fixed(f64),
    /// Straight line from `start` at epoch 0 to `end` at the last epoch.
    Linear { start: f64, end: f64 },
    /// `start * decay^epoch`.
    Exponential { start: f64, decay: f64 },
}

impl SigmaSchedule {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SigmaSchedule::Fixed(s) => s > 0.0,
            SigmaSchedule::Linear { start, end } => start > 0.0 && end > 0.0,
            SigmaSchedule::Exponential { start, decay } => start > 0.0 && decay > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("sigma schedule values must be positive: {self:?}")))
        }
    }
}

pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    pub sigma_schedule: SigmaSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            epochs: 200,
            patience: 20,
            sigma_schedule: SigmaSchedule::Fixed(0.015),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

pub fn sigma_for_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    match config.sigma_schedule {
        SigmaSchedule::Fixed(s) => s,
        SigmaSchedule::Linear { start, end } => {
            if config.epochs <= 1 {
                start
            } else {
                let t = epoch.min(config.epochs - 1) as f64 / (config.epochs - 1) as f64;
                start + (end - start) * t
            }
        }
        SigmaSchedule::Exponential { start, decay } => {
            (start * libm::pow(decay, epoch as f64)).max(SIGMA_FLOOR)
        }
    }
}

/// One Adam update on the mean gradient of the examples `indices` of `data`,
/// accumulated in index order. Returns the mean smoothed loss of the batch
/// before the update.
pub fn train_step(
    model: &mut Model,
    data: &Dataset,
    indices: &[usize],
    state: &mut AdamState,
    sigma: f64,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.perturb = PerturbationSpec::new(sigma)?;
    let mut grad = vec![0.0; model.num_params()];
    let mut total = 0.0;
    for &i in indices {
        let eg = model.example_grad(&data.features[i], data.labels[i])?;
        total += eg.loss;
        for (g, e) in grad.iter_mut().zip(&eg.params) {
            *g += e;
        }
    }
    let scale = 1.0 / indices.len() as f64;
    let loss = total * scale;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { epoch: 0, batch: 0, loss });
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    let mut params = model.params();
    state.update(&mut params, &grad)?;
    model.set_params(&params)?;
    Ok(loss)
}

/// Loss (and accuracy for classification) of a model on a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
}

pub fn evaluate(model: &Model, data: &Dataset, hard: bool) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut sq = 0.0;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let out = model.predict(x, hard)?;
        loss += loss_and_grad(model.loss, &out, y)?.0;
        if model.loss.is_classification() {
            correct += usize::from(model.loss.is_correct(&out, y));
        } else {
            sq += (out[0] - y) * (out[0] - y);
        }
    }
    let n = data.len() as f64;
    let classification = model.loss.is_classification();
    Ok(Metrics {
        loss: loss / n,
        accuracy: classification.then(|| correct as f64 / n),
        mse: (!classification).then(|| sq / n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub sigma: f64,
    pub train_loss: f64,
    /// Smoothed loss at this epoch's sigma.
    pub valid_loss: f64,
    /// Hard-mode accuracy; `None` for regression.
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    /// Validation metrics of the untrained model (`epoch` 0, `train_loss` on the training set).
    pub initial: EpochMetrics,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept; `None` if no epoch beat the initial model.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochMetrics {
        self.best_epoch.map_or(&self.initial, |e| &self.epochs[e])
    }
}

/// Trains `model` in place and leaves it at the parameters with the lowest
/// validation loss.
pub fn fit(model: &mut Model, train: &Dataset, valid: &Dataset, config: &TrainConfig) -> Result<TrainHistory> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    config.sigma_schedule.validate()?;

    let sigma0 = sigma_for_epoch(config, 0);
    model.perturb = PerturbationSpec::new(sigma0)?;
    let initial = EpochMetrics {
        epoch: 0,
        sigma: sigma0,
        train_loss: evaluate(model, train, false)?.loss,
        valid_loss: evaluate(model, valid, false)?.loss,
        valid_accuracy: evaluate(model, valid, true)?.accuracy,
    };

    let mut state = AdamState::new(config.adam, model.num_params());
    let mut best_loss = initial.valid_loss;
    let mut best_params = model.params();
    let mut best_sigma = sigma0;
    let mut best_epoch = None;
    let mut stale = 0usize;
    let mut epochs = Vec::new();

    for epoch in 0..config.epochs {
        let sigma = sigma_for_epoch(config, epoch);
        let mut total = 0.0;
        for (b, idx) in batches(train.len(), config.batch_size, config.seed, epoch).iter().enumerate() {
            let loss = train_step(model, train, idx, &mut state, sigma).map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch, batch: b, loss },
                other => other,
            })?;
            total += loss * idx.len() as f64;
        }
        let valid_loss = evaluate(model, valid, false)?.loss;
        let metrics = EpochMetrics {
            epoch,
            sigma,
            train_loss: total / train.len() as f64,
            valid_loss,
            valid_accuracy: evaluate(model, valid, true)?.accuracy,
        };
        epochs.push(metrics);
        if valid_loss < best_loss {
            best_loss = valid_loss;
            best_params = model.params();
            best_sigma = sigma;
            best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    model.set_params(&best_params)?;
    model.perturb = PerturbationSpec::new(best_sigma)?;
    Ok(TrainHistory { initial, epochs, best_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate, SyntheticKind, SyntheticSpec};
    use crate::forest::{generate_random_forest, LeafInit, Tree};
    use crate::neural::{Activation, Layer};
    use crate::seeded_rng;

    fn identity_line_model(seed: u64) -> Model {
        let mut rng = seeded_rng(seed);
        let embed = EmbeddingNet::random(2, &[1], Activation::Relu, Activation::Sigmoid, &mut rng).unwrap();
        let forest = generate_random_forest(32, 1, 4, LeafInit::Binary01, 1, &mut rng).unwrap();
        Model::new(embed, forest, PerturbationSpec::new(0.015).unwrap(), LossKind::SigmoidCrossEntropy, true)
            .unwrap()
    }

    #[test]
    fn sigma_schedules() {
        let mut c = TrainConfig { epochs: 10, sigma_schedule: SigmaSchedule::Fixed(0.015), ..TrainConfig::default() };
        assert_eq!(sigma_for_epoch(&c, 7), 0.015);
        c.sigma_schedule = SigmaSchedule::Linear { start: 0.1, end: 0.01 };
        assert_eq!(sigma_for_epoch(&c, 0), 0.1);
        assert!((sigma_for_epoch(&c, 9) - 0.01).abs() < 1e-15);
        c.sigma_schedule = SigmaSchedule::Exponential { start: 0.1, decay: 0.5 };
        assert!((sigma_for_epoch(&c, 3) - 0.0125).abs() < 1e-15);
        assert_eq!(sigma_for_epoch(&c, 60), SIGMA_FLOOR);
    }

    #[test]
    fn model_checks_dimensions() {
        let forest = Forest::new(3, 1, vec![]).unwrap();
        let spec = PerturbationSpec::new(0.1).unwrap();
        assert!(Model::new(EmbeddingNet::identity(2), forest.clone(), spec, LossKind::SquaredError, true).is_err());
        assert!(Model::new(
            EmbeddingNet::identity(3),
            forest.clone(),
            spec,
            LossKind::SoftmaxCrossEntropy { classes: 3 },
            true
        )
        .is_err());
        assert!(Model::with_tabular(1, EmbeddingNet::identity(2), forest, spec, LossKind::SquaredError, true).is_ok());
    }

    #[test]
    fn constant_forest_hard_equals_smooth_and_no_update() {
        let mut rng = seeded_rng(1);
        let mut forest = generate_random_forest(3, 2, 3, LeafInit::Zero, 1, &mut rng).unwrap();
        for id in forest.leaf_ids() {
            forest.leaf_mut(id).unwrap().value = vec![0.25];
        }
        let embed = EmbeddingNet::random(2, &[4, 2], Activation::Relu, Activation::Sigmoid, &mut rng).unwrap();
        let mut model = Model::new(
            embed,
            forest,
            PerturbationSpec::new(0.05).unwrap(),
            LossKind::SigmoidCrossEntropy,
            false,
        )
        .unwrap();
        let x = [0.3, 0.9];
        let hard = model.predict(&x, true).unwrap()[0];
        let soft = model.predict(&x, false).unwrap()[0];
        assert!((hard - 0.75).abs() < 1e-15 && (soft - 0.75).abs() < 1e-12);

        let data = Dataset::new(vec![x.to_vec(), vec![0.1, 0.2]], vec![1.0, 0.0]).unwrap();
        let before = model.params();
        let mut state = AdamState::new(AdamConfig::default(), model.num_params());
        train_step(&mut model, &data, &[0, 1], &mut state, 0.05).unwrap();
        assert_eq!(model.params(), before);
    }

    #[test]
    fn single_leaf_moves_toward_label() {
        let forest = Forest::new(1, 1, vec![Tree::leaf(vec![0.2])]).unwrap();
        let mut model = Model::new(
            EmbeddingNet::identity(1),
            forest,
            PerturbationSpec::new(0.1).unwrap(),
            LossKind::SquaredError,
            true,
        )
        .unwrap();
        let data = Dataset::new(vec![vec![0.5]], vec![1.0]).unwrap();
        let mut state = AdamState::new(AdamConfig::with_lr(0.05), model.num_params());
        let loss = train_step(&mut model, &data, &[0], &mut state, 0.1).unwrap();
        assert!((loss - 0.32).abs() < 1e-12);
        // residual 1 - 0.2 > 0, so the leaf must increase, by lr on the first Adam step
        assert!((model.params()[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn leaf_freezing_is_respected() {
        let mut model = identity_line_model(2);
        let frozen_leaves = model.params().len();
        model.leaf_trainable = false;
        assert_eq!(model.num_params(), 3);
        assert!(frozen_leaves > 3);
        let data = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 64, noise: 0.0, seed: 1 }).unwrap();
        let forest_before = model.forest().clone();
        let mut state = AdamState::new(AdamConfig::with_lr(0.01), model.num_params());
        train_step(&mut model, &data, &(0..64).collect::<Vec<_>>(), &mut state, 0.015).unwrap();
        assert_eq!(model.forest(), &forest_before);
    }

    #[test]
    fn held_out_loss_falls_on_identity_line() {
        let mut model = identity_line_model(3);
        let train = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 512, noise: 0.0, seed: 4 }).unwrap();
        let held = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 256, noise: 0.0, seed: 5 }).unwrap();
        let before = evaluate(&model, &held, false).unwrap().loss;
        let mut state = AdamState::new(AdamConfig::with_lr(0.01), model.num_params());
        for step in 0..100 {
            let idx: Vec<usize> = batches(train.len(), 128, 6, step / 4)[step % 4].clone();
            train_step(&mut model, &train, &idx, &mut state, 0.015).unwrap();
        }
        let after = evaluate(&model, &held, false).unwrap().loss;
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn training_objective_is_mean_example_loss() {
        let model = identity_line_model(7);
        let data = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 50, noise: 0.0, seed: 8 }).unwrap();
        let mean = data
            .features
            .iter()
            .zip(&data.labels)
            .map(|(x, &y)| model.example_loss(x, y, false).unwrap())
            .sum::<f64>()
            / 50.0;
        assert!((evaluate(&model, &data, false).unwrap().loss - mean).abs() < 1e-12);
    }

    #[test]
    fn patience_zero_stops_at_first_stall() {
        let layer = Layer::new(2, vec![0.0, 0.0], vec![0.0], Activation::Identity).unwrap();
        let embed = EmbeddingNet::new(2, vec![layer]).unwrap();
        let forest = Forest::new(1, 1, vec![Tree::leaf(vec![0.0])]).unwrap();
        // nothing can change: every epoch is non-improving
        let mut model = Model::new(embed, forest, PerturbationSpec::new(0.1).unwrap(), LossKind::SigmoidCrossEntropy, false)
            .unwrap();
        let data = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 20, noise: 0.0, seed: 1 }).unwrap();
        let config = TrainConfig { patience: 0, epochs: 10, batch_size: 8, ..TrainConfig::default() };
        let h = fit(&mut model, &data, &data, &config).unwrap();
        assert_eq!(h.epochs.len(), 1);
        assert_eq!(h.best_epoch, None);
    }

    #[test]
    fn fit_rejects_empty() {
        let mut model = identity_line_model(1);
        let empty = Dataset::new(vec![], vec![]).unwrap();
        let data = generate(&SyntheticSpec { kind: SyntheticKind::IdentityLine, n: 5, noise: 0.0, seed: 1 }).unwrap();
        assert_eq!(fit(&mut model, &empty, &data, &TrainConfig::default()), Err(Error::EmptyDataset));
    }

    #[test]
    fn divergence_carries_context() {
        let forest = Forest::new(1, 1, vec![Tree::leaf(vec![0.0])]).unwrap();
        let layer = Layer::new(1, vec![1e300], vec![0.0], Activation::Identity).unwrap();
        let embed = EmbeddingNet::new(1, vec![layer]).unwrap();
        let mut model = Model::new(embed, forest, PerturbationSpec::new(0.1).unwrap(), LossKind::SquaredError, true)
            .unwrap();
        let data = Dataset::new(vec![vec![1e10], vec![0.5]], vec![0.0, 1.0]).unwrap();
        let config = TrainConfig { batch_size: 1, epochs: 1, ..TrainConfig::default() };
        let err = fit(&mut model, &data, &data.subset(&[1]), &config).unwrap_err();
        assert!(matches!(err, Error::NonFiniteActivation { .. } | Error::Divergence { .. }), "{err:?}");
    }
}
