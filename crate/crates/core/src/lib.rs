//! Worst-case robust symbol-level precoding (SLP) for the MU-MIMO downlink.
//!
//! - [`realify`]: complex-to-real embeddings of channels and signals.
//! - [`constellation`]: M-PSK constellations and constructive-interference
//!   (CI) region geometry.
//! - [`solver`]: the min-max precoder (block coordinate ascent-descent) and
//!   the nominal CI-constrained baseline.
//! - [`simulator`]: Monte-Carlo link evaluation (BER, mutual information,
//!   power, energy efficiency).
//! - [`config`] and [`cli`]: the command-line front end.

pub mod cli;
pub mod config;
pub mod constellation;
pub mod error;
pub mod realify;
pub mod simulator;
pub mod solver;
pub mod validation;

pub use error::{Result, SlpError};
