//! A small CPU neural-network core: conv/pool/dense/dropout layers,
//! cross-entropy loss, RMSProp and reverse-mode gradients.

pub mod checkpoint;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod real;
pub mod tensor;
pub mod train;

pub use checkpoint::{CheckpointError, ModelMetadata, TrainedModel};
pub use layer::{Activation, LayerSpec};
pub use loss::{batch_loss_and_grad, categorical_cross_entropy};
pub use network::{ForwardPass, InitScheme, Mode, Network, OutputGrad};
pub use optim::{RmsProp, RmsPropConfig};
pub use real::Real;
pub use tensor::{Shape, Tensor};
pub use train::{argmax_rows, fit, fit_from_current, predict_batched, seeded_rng, Dataset, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    #[error("input has {found} values, expected a multiple of {expected}")]
    InputSize { expected: usize, found: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter tensors do not match the network")]
    ParamMismatch,
    #[error("non-finite value at layer {layer}, epoch {epoch}, batch {batch}")]
    NonFinite { layer: usize, epoch: usize, batch: usize },
}
