//! Single-image super-resolution with a stencil-guided non-local prior and a
//! small refinement CNN.
//!
//! The pipeline runs three stages on the luminance plane: cubic upsampling,
//! non-local enhancement weighted by stencil signatures, and a three-layer
//! convolutional refinement. Chroma is upsampled with bicubic interpolation.

pub mod config;
pub mod error;
pub mod eval;
pub mod image;
pub mod metrics;
pub mod nonlocal;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod srnet;
pub mod stencil;

pub use error::{Error, Result};
