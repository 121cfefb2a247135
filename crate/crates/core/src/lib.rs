//! Per-lesion binary segmentation of diabetic retinopathy fundus photographs.
//!
//! The crate covers the whole pipeline: fundus cropping and CLAHE contrast
//! enhancement ([`imaging`]), IDRiD-style manifests with leakage-free splitting
//! and paired augmentation ([`dataset`]), a DeepLabv3+ network with an
//! EfficientNet encoder on a small CPU autograd engine ([`nn`], [`model`]),
//! the training loop with early stopping ([`training`]), pixel-level
//! evaluation ([`metrics`]) and fusion of the four per-class masks into one
//! composite ([`fusion`]). The [`cli`] module drives the stages end to end.

pub mod cli;
pub mod error;
pub mod dataset;
pub mod fusion;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
