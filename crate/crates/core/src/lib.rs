//! Fairness-aware classification toolkit.
//!
//! The crate bundles four pieces that together form a small, reproducible
//! bias-mitigation pipeline for image (or tabular) classifiers:
//!
//! - [`metrics`]: group-fairness audit of prediction logs (SPD, EOD, DEO,
//!   AOD) plus per-group precision, recall and F1.
//! - [`loss`] and [`model`]: a dense classifier trained with manual
//!   backpropagation under cross-entropy plus a per-mini-batch squared
//!   soft-SPD penalty.
//! - [`sketch`]: deterministic grayscale and difference-of-Gaussians line
//!   sketch pre-processing that strips color from the input.
//! - [`data`]: log/manifest ingestion, group-balanced stratified splits and
//!   seeded mini-batching.
//!
//! [`cli`] wires everything into the `fairsketch` binary
//! (`sketchify`, `train`, `audit`, `report`). Runnable walkthroughs of each
//! capability live in the crate's `examples/` directory.

pub mod cli;
pub mod data;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod sketch;
pub mod synthetic;

pub use data::{LabeledExample, SplitSet};
pub use loss::{BatchPrediction, LossValue, LossWeights};
pub use metrics::{FairnessReport, FprMode, Group, GroupConfusion, PredictionLog, PredictionRecord};
pub use model::{ModelParams, TrainConfig, TrainHistory};
pub use sketch::{ImageBuffer, SketchParams};
