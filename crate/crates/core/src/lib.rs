//! RF-fingerprint classification of UAV controllers.
//!
//! The pipeline noises clean captures to a target SNR, turns them into
//! band-cropped, truncation-denoised spectrogram images (or grayscale
//! time-series plots), and trains a small convolutional network on them.

pub mod error;
pub mod render;
pub mod signal;
pub mod spectro;
pub mod cnn;
pub mod dataset;
pub mod eval;

pub use error::{Error, Result};
