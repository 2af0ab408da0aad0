//! Reference-free spectral CT reconstruction.
//!
//! The pipeline simulates photon-counting fan-beam data, reconstructs each
//! energy bin with SIRT, and alternates data-consistency sweeps with a small
//! U-net denoiser that is trained on the current reconstruction itself
//! (neighbour sub-sampling loss, a consistency regularizer, and a
//! cross-energy SSIM prior). See the crate README for the command-line
//! driver.

pub mod denoiser;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod prior;
pub mod recon;
pub mod tensor;

pub use error::{Error, Result};
