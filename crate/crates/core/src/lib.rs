//! Pulse-thermography inspection toolkit.
//!
//! The crate turns raw thermal sequences into principal-component and
//! thermographic-signal-reconstruction tensors, augments them, and trains a
//! dual-encoder attention-fusion network for defect segmentation and depth
//! estimation. Everything runs on the CPU in 64-bit arithmetic with a small
//! reverse-mode differentiation engine.
//!
//! Module map:
//!
//! * [`sequence`], [`io`], [`simulate`], [`dataset`]: data model, file
//!   formats, synthetic specimens and splits.
//! * [`compression`]: standardization, PCA images, TSR coefficients.
//! * [`augmentation`]: segment sampling, noise, paired affine transforms.
//! * [`engine`]: tensors, autodiff tape, layers, Adam, gradient checks.
//! * [`model`]: the fusion network and its losses.
//! * [`pipeline`]: training, evaluation, sweeps and reports.

pub mod augmentation;
pub mod compression;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sequence;
pub mod simulate;

pub use error::{Error, Result};
pub use sequence::{GroundTruth, ThermalSequence};
