//! The embedding function in front of the forest, supervised losses, and Adam.

mod adam;
mod loss;
mod net;

pub use adam::{AdamConfig, AdamState};
pub use loss::{class_index, loss_and_grad, LossKind};
pub use net::{Activation, EmbeddingNet, ForwardCache, Layer, LayerGrad, NetGrads};
