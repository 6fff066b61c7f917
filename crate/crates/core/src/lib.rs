//! Timbre latent spaces for short audio frames: spectral analysis, a small
//! reverse-mode network library, continuous and discrete autoencoders, a
//! descriptor-ordered codebook atlas, and the tooling around them.

pub mod atlas;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod continuous;
pub mod discrete;
pub mod dsp;
pub mod error;
pub mod frame_norm;
pub mod latent;
pub mod model;
pub mod nn;
pub mod probe;
pub mod rng;
pub mod service;

pub use error::{Error, Result};
