//! Dry-mass estimation for invertebrate specimens imaged while sinking
//! through a fluid-filled cuvette.
//!
//! The crate covers the whole flow: ingesting per-frame metadata and
//! silhouettes, computing area and sinking-speed predictors, fitting linear
//! and small convolutional estimators, and evaluating them with
//! cross-validation, bootstrap intervals and distribution tests.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data_model;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod linear;
pub mod neural;
pub mod rng;
pub mod synth;

pub use data_model::{
    validate_dataset, CameraId, Dataset, FrameMeta, PredictionEntry, PredictionSet, SpecimenRecord, ValidationReport,
};
pub use features::{SpecimenFeatures, TargetSpace};
pub use ingest::Raster;
pub use linear::{LinearModel, MASS_FLOOR_UG};
