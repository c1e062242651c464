//! Independent checks for the closed-form smoothing: a Monte-Carlo estimator
//! of the perturbed expectation, central finite differences, and a gradient
//! check over every trainable parameter of a [`Model`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_input, Error, Result};
use crate::forest::Forest;
use crate::neural::LossKind;
use crate::seeded_rng;
use crate::training::Model;

/// Sample mean of a vector-valued random variable and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

/// Estimates `E[F(mu + sigma * eps)]`, `eps` standard normal per dimension.
pub fn mc_expectation(forest: &Forest, mu: &[f64], sigma: f64, n_samples: usize, seed: u64) -> Result<McEstimate> {
    check_input(mu, forest.input_dim())?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n_samples}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma must be positive and finite, got {sigma}")));
    }
    let c = forest.output_dim();
    let mut rng = seeded_rng(seed);
    let mut z = vec![0.0; mu.len()];
    let mut out = vec![0.0; c];
    // Welford accumulators
    let mut mean = vec![0.0; c];
    let mut m2 = vec![0.0; c];
    for k in 0..n_samples {
        for (zi, m) in z.iter_mut().zip(mu) {
            let e: f64 = rng.sample(StandardNormal);
            *zi = m + sigma * e;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        forest.accumulate(&z, &mut out);
        let n = (k + 1) as f64;
        for j in 0..c {
            let d = out[j] - mean[j];
            mean[j] += d / n;
            m2[j] += d * (out[j] - mean[j]);
        }
    }
    let n = n_samples as f64;
    let stderr = m2.iter().map(|s| libm::sqrt((s / (n - 1.0)).max(0.0) / n)).collect();
    Ok(McEstimate { mean, stderr, samples: n_samples })
}

/// Central-difference Jacobian `J[c][i] = (f(mu + h e_i)_c - f(mu - h e_i)_c) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, mu: &[f64], h: f64) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let mut x = mu.to_vec();
    let mut columns = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        x[i] = mu[i] + h;
        let plus = f(&x)?;
        x[i] = mu[i] - h;
        let minus = f(&x)?;
        x[i] = mu[i];
        if plus.len() != minus.len() {
            return Err(Error::ShapeMismatch("function output length changed".into()));
        }
        columns.push(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect::<Vec<f64>>());
    }
    let rows = columns.first().map_or(0, Vec::len);
    Ok((0..rows).map(|c| columns.iter().map(|col| col[c]).collect()).collect())
}

/// Denominator floor of [`relative_error`]; below it the error is absolute.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    EmbeddingWeight,
    EmbeddingBias,
    Leaf,
    Input,
}

impl ParamClass {
    fn of(name: &str) -> Self {
        if name.starts_with("input") {
            ParamClass::Input
        } else if name.starts_with("tree") {
            ParamClass::Leaf
        } else if name.contains(".bias") {
            ParamClass::EmbeddingBias
        } else {
            ParamClass::EmbeddingWeight
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    /// Parameter name with the case index, e.g. `case2/layer0.weight[1][0]`.
    pub name: String,
    pub class: ParamClass,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Why the check failed before or while comparing, if it did.
    pub note: Option<String>,
}

impl GradCheckReport {
    fn finish(entries: Vec<GradCheckEntry>, tolerance: f64, note: Option<String>) -> Self {
        let max_rel_err = entries.iter().map(|e| e.rel_err).fold(0.0, f64::max);
        let note = note.or_else(|| {
            (tolerance <= 0.0).then(|| format!("tolerance must be positive, got {tolerance}"))
        });
        let pass = note.is_none() && max_rel_err <= tolerance;
        GradCheckReport { entries, max_rel_err, tolerance, pass, note }
    }

    /// The entry with the largest relative error.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn max_rel_err_for(&self, class: ParamClass) -> f64 {
        self.entries.iter().filter(|e| e.class == class).map(|e| e.rel_err).fold(0.0, f64::max)
    }

    /// Entries whose relative error exceeds the tolerance.
    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(move |e| e.rel_err > self.tolerance)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pass={}", self.pass)?;
        writeln!(f, "tolerance={:e}", self.tolerance)?;
        writeln!(f, "max_rel_err={:e}", self.max_rel_err)?;
        writeln!(f, "checked={}", self.entries.len())?;
        if let Some(w) = self.worst() {
            writeln!(f, "worst={}", w.name)?;
        }
        if let Some(n) = &self.note {
            writeln!(f, "note={n}")?;
        }
        for e in self.failures() {
            writeln!(
                f,
                "fail {} analytic={:e} numeric={:e} abs_err={:e} rel_err={:e}",
                e.name, e.analytic, e.numeric, e.abs_err, e.rel_err
            )?;
        }
        Ok(())
    }
}

/// Finite-difference step relative to the perturbation scale.
///
/// Higher derivatives of the smoothed forest grow like `sigma^-k`, so the
/// step is `H_REL * sigma * max(1, |theta|)`. A net gradient is often a small
/// sum of large cancelling region terms; truncation error scales with those
/// terms, which is why the step is this small.
pub const H_REL: f64 = 1e-4;

/// Random inputs in `[0, 1]^m` with labels valid for the model's loss.
pub fn random_cases(model: &Model, n_cases: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let mut rng = seeded_rng(seed);
    (0..n_cases)
        .map(|_| {
            let x: Vec<f64> = (0..model.input_dim()).map(|_| rng.random::<f64>()).collect();
            let y = match model.loss {
                LossKind::SigmoidCrossEntropy => f64::from(rng.random_bool(0.5)),
                LossKind::SoftmaxCrossEntropy { classes } => rng.random_range(0..classes) as f64,
                LossKind::SquaredError => rng.random::<f64>() * 2.0 - 1.0,
            };
            (x, y)
        })
        .collect()
}

/// Compares [`Model::example_grad`] against central differences of the
/// smoothed loss, for every trainable parameter and every input coordinate.
pub fn gradcheck_model(model: &Model, n_cases: usize, tolerance: f64, seed: u64) -> GradCheckReport {
    gradcheck_with_analytic(model, n_cases, tolerance, seed, |m, x, y| {
        m.example_grad(x, y).map(|g| (g.params, g.input))
    })
}

/// [`gradcheck_model`] with a caller-supplied analytic gradient
/// `(params, input)`, used to exercise the checker itself.
pub fn gradcheck_with_analytic<G>(model: &Model, n_cases: usize, tolerance: f64, seed: u64, mut analytic: G) -> GradCheckReport
where
    G: FnMut(&Model, &[f64], f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let names = model.param_names();
    let mut entries = Vec::new();
    match check_cases(model, n_cases, seed, &names, &mut analytic, &mut entries) {
        Ok(()) => GradCheckReport::finish(entries, tolerance, None),
        Err(e) => GradCheckReport::finish(entries, tolerance, Some(format!("{e}"))),
    }
}

fn check_cases<G>(
    model: &Model,
    n_cases: usize,
    seed: u64,
    names: &[String],
    analytic: &mut G,
    entries: &mut Vec<GradCheckEntry>,
) -> Result<()>
where
    G: FnMut(&Model, &[f64], f64) -> Result<(Vec<f64>, Vec<f64>)>,
{
    let sigma = model.perturb.sigma();
    let base = model.params();
    let mut probe = model.clone();
    for (case, (x, y)) in random_cases(model, n_cases, seed).into_iter().enumerate() {
        let (grad_params, grad_input) = analytic(model, &x, y)?;
        if grad_params.len() != base.len() || grad_input.len() != x.len() {
            return Err(Error::ShapeMismatch("analytic gradient has the wrong length".into()));
        }

        let mut p = base.clone();
        for (i, name) in names.iter().enumerate() {
            let h = H_REL * sigma * base[i].abs().max(1.0);
            p[i] = base[i] + h;
            probe.set_params(&p)?;
            let plus = probe.example_loss(&x, y, false)?;
            p[i] = base[i] - h;
            probe.set_params(&p)?;
            let minus = probe.example_loss(&x, y, false)?;
            p[i] = base[i];
            entries.push(entry(format!("case{case}/{name}"), grad_params[i], (plus - minus) / (2.0 * h)));
        }
        probe.set_params(&base)?;

        let mut xs = x.clone();
        for i in 0..x.len() {
            let h = H_REL * sigma * x[i].abs().max(1.0);
            xs[i] = x[i] + h;
            let plus = model.example_loss(&xs, y, false)?;
            xs[i] = x[i] - h;
            let minus = model.example_loss(&xs, y, false)?;
            xs[i] = x[i];
            entries.push(entry(format!("case{case}/input[{i}]"), grad_input[i], (plus - minus) / (2.0 * h)));
        }
    }
    Ok(())
}

fn entry(name: String, analytic: f64, numeric: f64) -> GradCheckEntry {
    let class = ParamClass::of(name.split_once('/').map_or(name.as_str(), |(_, n)| n));
    GradCheckEntry {
        name,
        class,
        analytic,
        numeric,
        abs_err: (analytic - numeric).abs(),
        rel_err: if analytic.is_finite() && numeric.is_finite() { relative_error(analytic, numeric) } else { f64::INFINITY },
    }
}
