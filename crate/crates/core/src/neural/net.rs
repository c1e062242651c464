use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::loss::sigmoid;
use crate::error::{check_input, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Dense layer `activation(W x + b)`; `weights` is row-major, one row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(in_dim: usize, weights: Vec<f64>, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let out_dim = biases.len();
        if out_dim == 0 || in_dim == 0 || weights.len() != in_dim * out_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer with {in_dim} inputs and {out_dim} outputs needs {} weights, got {}",
                in_dim * out_dim,
                weights.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("layer parameters must be finite".into()));
        }
        Ok(Layer { in_dim, out_dim, weights, biases, activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let weights = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        Layer { in_dim, out_dim, weights, biases: vec![0.0; out_dim], activation }
    }

    /// Square identity map with no bias.
    pub fn identity(dim: usize, activation: Activation) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Layer { in_dim: dim, out_dim: dim, weights, biases: vec![0.0; dim], activation }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Weight row for output `o`.
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }
}

/// Feed-forward embedding `E: R^m -> R^d`. No layers means the identity map.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    input_dim: usize,
    layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations recorded by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrad>,
}

impl NetGrads {
    /// Gradients flattened in [`EmbeddingNet::params`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

impl EmbeddingNet {
    pub fn identity(dim: usize) -> Self {
        EmbeddingNet { input_dim: dim, layers: Vec::new() }
    }

    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("embedding input_dim must be at least 1".into()));
        }
        let mut dim = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects {} inputs but receives {dim}",
                    l.in_dim
                )));
            }
            dim = l.out_dim;
        }
        Ok(EmbeddingNet { input_dim, layers })
    }

    /// Randomly initialised MLP with the given layer widths; the last width is
    /// the embedding dimension.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let mut dim = input_dim;
        let layers = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let act = if i + 1 == widths.len() { output } else { hidden };
                let layer = Layer::random(dim, w, act, rng);
                dim = w;
                layer
            })
            .collect();
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Forward pass; fails if any activation is non-finite.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        check_input(x, self.input_dim)?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let z: Vec<f64> = (0..l.out_dim)
                .map(|o| l.biases[o] + l.row(o).iter().zip(&h).map(|(w, v)| w * v).sum::<f64>())
                .collect();
            let a: Vec<f64> = z.iter().map(|&v| l.activation.apply(v)).collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: li });
            }
            cache.inputs.push(core::mem::replace(&mut h, a.clone()));
            cache.pre.push(z);
            cache.outputs.push(a);
        }
        Ok((h, cache))
    }

    /// Reverse pass: parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(NetGrads, Vec<f64>)> {
        if cache.pre.len() != self.layers.len()
            || cache.pre.iter().zip(&self.layers).any(|(z, l)| z.len() != l.out_dim)
        {
            return Err(Error::ShapeMismatch("forward cache does not match this network".into()));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: grad_output.len() });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let dz: Vec<f64> = g
                .iter()
                .zip(&cache.pre[li])
                .zip(&cache.outputs[li])
                .map(|((g, &z), &y)| g * l.activation.derivative(z, y))
                .collect();
            let input = &cache.inputs[li];
            let mut dw = vec![0.0; l.weights.len()];
            for (o, d) in dz.iter().enumerate() {
                for (i, v) in input.iter().enumerate() {
                    dw[o * l.in_dim + i] = d * v;
                }
            }
            let mut dx = vec![0.0; l.in_dim];
            for (o, d) in dz.iter().enumerate() {
                for (x, w) in dx.iter_mut().zip(l.row(o)) {
                    *x += d * w;
                }
            }
            grads.push(LayerGrad { weights: dw, biases: dz });
            g = dx;
        }
        grads.reverse();
        Ok((NetGrads { layers: grads }, g))
    }
}
