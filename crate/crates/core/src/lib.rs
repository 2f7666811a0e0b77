//! Desk-scale training and evaluation harness for a small two-scale
//! single-stage detector with threshold-gated classification loss.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`gating`] — decaying selection threshold, per-instance class error,
//!   and gate decisions that zero the classification loss of instances the
//!   model already classifies well.
//! - [`model`] — a configurable conv/BN/leaky-ReLU backbone with detection
//!   heads at two strides, plus box decoding and checkpoint IO.
//! - [`losses`] — target assignment and the weighted three-component loss
//!   (classification, GIoU regression, objectness) with gating applied to
//!   the classification term only.
//! - [`data`] — deterministic synthetic shape scenes, mosaic augmentation,
//!   multi-scale resizing, and COCO-style dataset IO.
//! - [`eval`] — NMS postprocessing and COCO-style average precision.
//! - [`train`] — SGD with momentum, cosine learning rate, the epoch loop,
//!   and a baseline-vs-gated comparison runner.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); training
//! defaults to `f32`, gradient checks run in `f64`.

pub mod config;
pub mod data;
pub mod eval;
pub mod gating;
pub mod geometry;
pub mod hash;
pub mod losses;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod train;

pub use scalar::Scalar;

/// Single-precision detector, the training default.
pub type Detector32 = model::Detector<f32>;
/// Double-precision detector, used by gradient checks.
pub type Detector64 = model::Detector<f64>;
/// Single-precision dataset sample.
pub type Sample32 = data::Sample<f32>;
/// Double-precision dataset sample.
pub type Sample64 = data::Sample<f64>;
