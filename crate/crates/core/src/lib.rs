//! IR-cut filter design and illumination-aware spectral reconstruction.
//!
//! The crate simulates an RGB camera whose IR-cut filter transmittance is a
//! learnable curve, and trains it jointly with a two-branch network that
//! recovers the scene spectrum as the product of a per-pixel reflectance and
//! a global illuminant.
//!
//! - [`spectral`]: band grids, cubes, curves and the linear camera model
//! - [`illuminant`]: CIE daylight, colour temperature, white-world baseline
//! - [`autodiff`]: the reverse-mode tape everything trains on
//! - [`model`]: learnable filter plus illumination and reflectance branches
//! - [`objective`]: training losses and evaluation metrics
//! - [`train`]: Adam, patch extraction, dataset splits, the training loop
//! - [`data`]: cube and spectra file formats, synthetic scenes, checkpoints
//! - [`plot`]: deterministic SVG line charts

pub mod autodiff;
pub mod data;
pub mod error;
pub mod illuminant;
pub mod model;
pub mod objective;
pub mod plot;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
