//! Spectrum-guided adversarial autoencoder for subject-independent human
//! activity recognition from wearable sensor windows.
//!
//! The latent code of a window is split into a pure part `gamma`, which a
//! discriminator must classify, and a disparity part `delta`, which is
//! trained to carry the subject-specific variation the discriminator cannot
//! use. A small frequency-domain scoring head weights every loss by how much
//! information a window's amplitude spectrum carries.

pub mod checkpoint;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod nn;
pub mod plot;
pub mod spectrum;
pub mod training;

pub use error::{Error, Result};
