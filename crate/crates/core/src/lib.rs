//! Biased multi-domain adversarial training at desk scale.
//!
//! * [`numerics`] — dense tensors and exact reverse-mode gradients.
//! * [`gaussmodel`] — the Gaussian feature model and Monte Carlo checks of its results.
//! * [`models`] — two-head classifiers and their checkpoint format.
//! * [`attacks`] — FGSM and ℓ∞ PGD with cross-entropy, margin and KL objectives.
//! * [`biamat`] — confidence routing, the combined objective and the training loop.
//! * [`harness`] — datasets, configs, evaluation, metrics and the CLI's building blocks.
pub mod attacks;
pub mod biamat;
pub mod data;
pub mod error;
pub mod gaussmodel;
pub mod harness;
pub mod models;
pub mod numerics;
pub use data::Dataset;
pub use error::{Error, Result};
