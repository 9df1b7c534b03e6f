//! Small convolutional regressors and classifiers trained from scratch.
//!
//! Three topologies share one head: a single-view image model, a multi-view
//! model with one encoder per camera, and a metadata-aware model that fuses
//! image features with an encoding of area and sinking speed. Gradients are
//! computed by hand-written reverse passes over each layer.

mod augment;
mod layers;
mod loss;
mod model;
mod optim;
mod tensor;
mod train;

use thiserror::Error;

pub use augment::{augment, dihedral, flip_horizontal, photometric, rot90, rotate, AugmentPolicy};
pub use loss::{cross_entropy, loss, loss_and_grad, softmax, LossKind, LossSpace};
pub use model::{
    backward_sample, encode_image, encode_metadata, forward, forward_cached, init_parameters, zero_grads, Architecture,
    ConvBlock, ForwardCache, Freeze, Head, MetadataInput, ModelConfig, ParamMap, SampleInput, Task,
};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};
pub use tensor::Tensor;
pub use train::{
    backward, class_probabilities, classify_specimen, fine_tune, predict_dataset, predict_images, predict_specimen,
    train, MetadataScaler, TrainConfig, TrainedModel, CHECKPOINT_VERSION,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("metadata-aware model needs a metadata vector")]
    MissingMetadata,
    #[error("multi-view model needs images from both cameras")]
    MissingSecondView,
    #[error("log-space loss needs positive targets, got {0}")]
    NonPositiveTargetInLogSpace(f64),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("raster must be square, got {height}x{width}")]
    NonSquareRaster { height: usize, width: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("train or validation split is empty")]
    EmptySplit,
    #[error("incompatible architecture: {0}")]
    IncompatibleArchitecture(String),
    #[error("specimen {0} has no rasters")]
    MissingRasters(String),
    #[error("specimen {0} has no dry mass")]
    MissingMass(String),
    #[error("taxon {0:?} is not one of the model's classes")]
    UnknownClass(String),
}
