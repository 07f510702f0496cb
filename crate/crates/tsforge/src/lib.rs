//! Time-series training-data synthesis and evaluation.
//!
//! A denoising diffusion model generates first-time-step feature vectors;
//! a masked encoder-decoder sequence model extrapolates the remaining steps
//! under a quartile-segmented weighted loss. Quality is quantified with
//! Fréchet-distance scores and classifier-accuracy uplift.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod netcore;
pub mod pipeline;
pub mod segloss;
pub mod seqmodel;

pub use error::{Error, Result};
