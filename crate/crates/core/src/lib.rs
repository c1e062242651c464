//! Axis-aligned decision forests made differentiable by Gaussian input
//! perturbation.
//!
//! A forest `F` is evaluated at a Gaussian-perturbed point `z ~ N(mu, sigma^2 I)`
//! and the expectation `E[F(z)]` is computed in closed form: each leaf region is
//! an axis-aligned box, so its probability mass is a product of univariate CDF
//! differences. The resulting surrogate is smooth in `mu` and linear in the leaf
//! values, which lets a forest drive gradient training of an embedding network
//! placed in front of it, while deployment still uses the hard forest.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, dataset IO and
//! the command-line runner live in the companion `smoothforest` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod datasets;
pub mod error;
pub mod forest;
pub mod neural;
pub mod oracle;
pub mod smoothing;
pub mod training;

pub use error::{Error, Result};

/// Seeded generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate-wide generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
