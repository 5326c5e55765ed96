//! Activity recognition chain for upper-limb movement assessment from
//! dual-wrist smartwatch IMU recordings.
//!
//! The pipeline runs
//!
//! ```text
//! ingest -> preprocess -> segment -> classify -> evaluate
//! ```
//!
//! over 12-channel inertial recordings (acceleration, rotation rate,
//! magnetometer, attitude) sampled at 100 Hz on both wrists. Two recording
//! scenarios are supported: a paced, rest-separated protocol (L1) and an
//! unconstrained stream of target and daily-life movements (L2). Candidate
//! segments come from rest-energy action segmentation, non-overlapping
//! sliding windows, or peak-anchored gesture spotting, and are classified
//! either by a linear multiclass SVM over statistical features or by a
//! compact 1-D convolutional network over the raw window.
//!
//! [`synth`] generates parametric sessions with exact ground truth so the
//! whole chain is testable without hardware.

pub mod cnn;
pub mod data_model;
pub mod error;
pub mod eval;
pub mod features;
pub mod preprocess;
pub mod segment;
pub mod svm;
pub mod synth;
pub(crate) mod util;

pub use error::{Error, Result};
pub use util::derive_seed;
