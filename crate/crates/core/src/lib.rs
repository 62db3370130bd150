//! Desk-scale shortcut detection and mitigation.
//!
//! A small convolutional classifier is trained on synthetic images where a
//! coloured corner patch is spuriously correlated with the label. Relevance
//! propagation exposes the patch reliance, a selector picks samples whose
//! prediction leans on it, and fine-tuning with an ℓ1 penalty on the
//! relevance-weighted penultimate activations penalizes the shortcut.

pub mod detection;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod lrp;
pub mod metrics;
pub mod mitigation;
pub mod network;
pub mod render;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
