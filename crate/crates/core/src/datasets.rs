//! Labeled datasets, synthetic 2-D patterns, splitting and minibatching.
//!
//! Every generator is a pure function of its spec (including the seed).
//! Pattern features live in `[0, 1]^2` so that random forest thresholds drawn
//! from `[0, 1]` cover them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_input, Error, Result};
use crate::seeded_rng;

/// Feature rows with one label each. Class labels are stored as `0.0, 1.0, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            let dim = first.len();
            for row in &features {
                check_input(row, dim)?;
            }
        }
        Ok(Dataset { features, labels, feature_names: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature columns; 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Number of classes implied by the labels (max label + 1).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().fold(0.0f64, |a, &b| a.max(b)) as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Label 1 iff `x1 > x2`.
    IdentityLine,
    /// Label 1 iff exactly one coordinate exceeds 0.5.
    XorQuadrants,
    /// Inner disk (label 1) inside an outer ring (label 0).
    ConcentricCircles,
    /// Two interleaved spiral arms.
    TwoSpirals,
    /// `k` Gaussian clusters on a circle, labels `0..k`.
    GaussianBlobs { k: usize },
}

impl SyntheticKind {
    /// Parses `identity_line`, `xor_quadrants`, `concentric_circles`,
    /// `two_spirals`, `gaussian_blobs` or `gaussian_blobs:K`.
    pub fn from_name(name: &str) -> Result<Self> {
        let kind = match name {
            "identity_line" => SyntheticKind::IdentityLine,
            "xor_quadrants" => SyntheticKind::XorQuadrants,
            "concentric_circles" => SyntheticKind::ConcentricCircles,
            "two_spirals" => SyntheticKind::TwoSpirals,
            "gaussian_blobs" => SyntheticKind::GaussianBlobs { k: 3 },
            other => match other.strip_prefix("gaussian_blobs:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 2 => SyntheticKind::GaussianBlobs { k },
                _ => return Err(Error::InvalidArgument(format!("unknown dataset kind `{name}`"))),
            },
        };
        Ok(kind)
    }

    pub fn num_classes(&self) -> usize {
        match self {
            SyntheticKind::GaussianBlobs { k } => *k,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    /// Probability of replacing a label with a different, uniformly chosen class.
    pub noise: f64,
    pub seed: u64,
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(Error::InvalidArgument(format!("noise must lie in [0, 1], got {}", spec.noise)));
    }
    if let SyntheticKind::GaussianBlobs { k } = spec.kind {
        if k < 2 {
            return Err(Error::InvalidArgument("gaussian_blobs needs k >= 2".into()));
        }
    }
    let mut rng = seeded_rng(spec.seed);
    let mut features = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (x, y) = sample_point(spec.kind, &mut rng);
        features.push(x);
        labels.push(y as f64);
    }
    if spec.noise > 0.0 {
        let classes = spec.kind.num_classes();
        for y in labels.iter_mut() {
            if rng.random_bool(spec.noise) {
                let shift = rng.random_range(1..classes);
                *y = ((*y as usize + shift) % classes) as f64;
            }
        }
    }
    let mut ds = Dataset::new(features, labels)?;
    ds.feature_names = Some(alloc::vec!["x1".into(), "x2".into()]);
    Ok(ds)
}

fn polar<R: Rng + ?Sized>(rng: &mut R, r_min: f64, r_max: f64) -> Vec<f64> {
    // uniform over the annulus area
    let u: f64 = rng.random();
    let r = libm::sqrt(r_min * r_min + u * (r_max * r_max - r_min * r_min));
    let a = 2.0 * PI * rng.random::<f64>();
    alloc::vec![0.5 + r * libm::cos(a), 0.5 + r * libm::sin(a)]
}

fn sample_point<R: Rng + ?Sized>(kind: SyntheticKind, rng: &mut R) -> (Vec<f64>, usize) {
    match kind {
        SyntheticKind::IdentityLine => {
            let x: Vec<f64> = alloc::vec![rng.random(), rng.random()];
            let y = usize::from(x[0] > x[1]);
            (x, y)
        }
        SyntheticKind::XorQuadrants => {
            let x: Vec<f64> = alloc::vec![rng.random(), rng.random()];
            let y = usize::from((x[0] > 0.5) != (x[1] > 0.5));
            (x, y)
        }
        SyntheticKind::ConcentricCircles => {
            let y = usize::from(rng.random_bool(0.5));
            let x = if y == 1 { polar(rng, 0.0, 0.2) } else { polar(rng, 0.3, 0.45) };
            (x, y)
        }
        SyntheticKind::TwoSpirals => {
            let y = usize::from(rng.random_bool(0.5));
            let t: f64 = rng.random();
            let angle = 3.0 * PI * t + PI * y as f64;
            let r = 0.05 + 0.4 * t;
            (alloc::vec![0.5 + r * libm::cos(angle), 0.5 + r * libm::sin(angle)], y)
        }
        SyntheticKind::GaussianBlobs { k } => {
            let y = rng.random_range(0..k);
            let a = 2.0 * PI * y as f64 / k as f64;
            let spread = Normal::new(0.0, 0.07).expect("valid normal");
            let x = alloc::vec![
                (0.5 + 0.3 * libm::cos(a) + spread.sample(rng)).clamp(0.0, 1.0),
                (0.5 + 0.3 * libm::sin(a) + spread.sample(rng)).clamp(0.0, 1.0),
            ];
            (x, y)
        }
    }
}

/// Binary task whose features stand in for pre-trained embeddings.
///
/// Generative features `g ~ U[0,1]^dim` carry the label `g_0 > 0.5`; the
/// returned features are `sigmoid(gain * R (g - 0.5))` for a random rotation
/// `R`, so the label boundary is oblique in the embedding space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedEmbeddingSpec {
    pub n: usize,
    pub dim: usize,
    pub gain: f64,
    pub seed: u64,
}

pub fn rotated_embeddings(spec: &RotatedEmbeddingSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.dim < 2 {
        return Err(Error::InvalidArgument("rotated embeddings need n >= 1 and dim >= 2".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let rotation = random_rotation(spec.dim, &mut rng);
    let mut features = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let g: Vec<f64> = (0..spec.dim).map(|_| rng.random::<f64>() - 0.5).collect();
        labels.push(f64::from(u8::from(g[0] > 0.0)));
        let e = rotation
            .iter()
            .map(|row| {
                let z: f64 = row.iter().zip(&g).map(|(r, v)| r * v).sum();
                crate::neural::Activation::Sigmoid.apply(spec.gain * z)
            })
            .collect();
        features.push(e);
    }
    let mut ds = Dataset::new(features, labels)?;
    ds.feature_names = Some((0..spec.dim).map(|i| format!("e{i}")).collect());
    Ok(ds)
}

/// Orthonormal rows from Gram-Schmidt on a Gaussian matrix.
fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
    }
    rows
}

/// Seeded shuffle split into train, validation and test parts.
pub fn split(data: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || libm::fabs(a + b + c - 1.0) > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = data.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("cannot split {n} examples into 3 parts")));
    }
    let nf = n as f64;
    let mut n_train = (libm::round(nf * a) as usize).clamp(1, n - 2);
    let mut n_valid = (libm::round(nf * b) as usize).max(1);
    if n_train + n_valid > n - 1 {
        n_valid = n - 1 - n_train;
        if n_valid == 0 {
            n_valid = 1;
            n_train -= 1;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    let (train, rest) = idx.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    Ok((data.subset(train), data.subset(valid), data.subset(test)))
}

/// Shuffled minibatch index lists for one epoch; the last batch may be short.
///
/// The epoch number selects an independent stream of the seeded generator, so
/// every epoch gets its own order.
pub fn batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut rng = seeded_rng(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Seeded shuffle that holds out `round(n * valid_fraction)` rows, at least
/// one, for validation and keeps the rest for training.
pub fn holdout(data: &Dataset, valid_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("valid_fraction must be in (0, 1), got {valid_fraction}")));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot hold out from {n} rows")));
    }
    let k = (libm::round(n as f64 * valid_fraction) as usize).clamp(1, n - 1);
    let mut rng = seeded_rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    Ok((data.subset(&idx[k..]), data.subset(&idx[..k])))
}
