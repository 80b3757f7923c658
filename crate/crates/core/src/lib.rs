//! Toy-scale diffusion pipeline for studying guidance in score space.
//!
//! The crate trains and samples a small DDPM on the two-moons dataset and
//! implements two guidance combiners: the standard classifier-free rule and a
//! filtered variant that removes, via a thin SVD of the stacked score pair,
//! the component of the unconditional score orthogonal to the pair's dominant
//! direction before extrapolating. Analysis modules measure the score
//! geometry that motivates the filter: singular-value spectra of score
//! batches, alignment between conditional and unconditional singular vectors,
//! and tangential-to-normal score ratios along sampling trajectories.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod guidance;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use error::{CoreError, Result};
