//! Noise-aware dense prediction for fingerprint preprocessing.
//!
//! The crate bundles everything needed to train and analyse per-pixel
//! data-uncertainty (heteroscedastic) models at desk scale:
//!
//! - [`ndgrad`]: a small f64 tensor engine with a define-by-run tape,
//!   the layers the models need, and Adam.
//! - [`models`]: a U-shaped encoder-decoder with single-head, dual-head
//!   (prediction + log-variance) and Monte-Carlo dropout variants.
//! - [`losses`]: the noise-aware regression and classification objectives
//!   alongside plain MSE and cross-entropy.
//! - [`synthdata`]: synthetic ridge images, degradations and the on-disk
//!   dataset format (PGM + JSON).
//! - [`metrics`]: Dice, Jaccard, patch error, HC/MC, PSNR, uncertainty
//!   partition statistics and inference timing.
//! - [`experiment`]: the config-driven harness behind the `noiseaware` CLI.

pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod ndgrad;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
pub use rng::RngState;
