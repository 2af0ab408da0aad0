//! Iterative reconstruction: SIRT, TV-regularized SIRT, and the
//! self-supervised split iteration.

mod s2s;
mod sirt;
mod tvm;

pub use s2s::{n2n_postprocess, s2s_reconstruct, split_reconstruct, S2sOutput, SplitSchedule};
pub use sirt::{sirt_run, x_update, SirtOperator, SirtOutput, SplitState, DIVERGENCE_FACTOR};
pub use tvm::{tv_gradient, tv_value, tvm_reconstruct, TV_EPSILON};

use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::denoiser::{DenoiserNet, LossReport, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::image::SpectralImageStack;
use crate::phantom::SpectralSinogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sirt,
    Tvm,
    N2nPost,
    S2s,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Sirt, Algorithm::Tvm, Algorithm::N2nPost, Algorithm::S2s];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sirt => "sirt",
            Algorithm::Tvm => "tvm",
            Algorithm::N2nPost => "n2n-post",
            Algorithm::S2s => "s2s",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("recon.algorithm", format!("unknown algorithm `{s}`, expected one of sirt, tvm, n2n-post, s2s")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub algorithm: Algorithm,
    /// Sweeps for the SIRT and TVM baselines and the SIRT start of n2n-post.
    pub sirt_iterations: usize,
    /// Outer iterations K of the split scheme.
    pub outer_iterations: usize,
    /// Data-consistency sweeps per outer iteration.
    pub sweeps_per_outer: usize,
    /// Coupling weight toward the denoised image, in units of the SIRT step.
    pub lambda1: f64,
    pub relaxation: f64,
    pub nonnegative: bool,
    pub tv_weight: f64,
    pub tv_iterations: usize,
    /// Stop once `||y - Ax|| / ||y||` drops below this value.
    pub residual_tolerance: Option<f64>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            algorithm: Algorithm::S2s,
            sirt_iterations: 50,
            outer_iterations: 5,
            sweeps_per_outer: 10,
            lambda1: 0.003,
            relaxation: 1.0,
            nonnegative: true,
            tv_weight: 0.2,
            tv_iterations: 10,
            residual_tolerance: None,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::config("recon.relaxation", format!("must lie in (0, 2), got {}", self.relaxation)));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::config("recon.lambda1", format!("must be finite and >= 0, got {}", self.lambda1)));
        }
        if self.relaxation * self.lambda1 >= 1.0 {
            return Err(Error::config("recon.lambda1", "relaxation * lambda1 must stay below 1"));
        }
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return Err(Error::config("recon.tv_weight", format!("must be finite and >= 0, got {}", self.tv_weight)));
        }
        if self.outer_iterations == 0 {
            return Err(Error::config("recon.outer_iterations", "must be at least 1"));
        }
        if let Some(t) = self.residual_tolerance {
            if !(t > 0.0) {
                return Err(Error::config("recon.residual_tolerance", format!("must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Output of any of the four algorithms.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub algorithm: Algorithm,
    pub images: SpectralImageStack,
    /// Per-bin data residual history, one entry per sweep plus the final one.
    pub residuals: Vec<Vec<f64>>,
    /// Empty for the non-learned algorithms.
    pub losses: Vec<LossReport>,
    pub net: Option<DenoiserNet>,
}

pub fn reconstruct(
    algorithm: Algorithm,
    sino: &SpectralSinogram,
    projector: &Projector,
    config: &ReconConfig,
    train: &TrainConfig,
) -> Result<Reconstruction> {
    let plain = |o: SirtOutput| Reconstruction { algorithm, images: o.images, residuals: o.residuals, losses: Vec::new(), net: None };
    let learned = |o: S2sOutput| Reconstruction { algorithm, images: o.images, residuals: o.residuals, losses: o.losses, net: Some(o.net) };
    Ok(match algorithm {
        Algorithm::Sirt => plain(sirt_run(sino, projector, config)?),
        Algorithm::Tvm => plain(tvm_reconstruct(sino, projector, config)?),
        Algorithm::N2nPost => learned(n2n_postprocess(sino, projector, config, train)?),
        Algorithm::S2s => learned(s2s_reconstruct(sino, projector, config, train)?),
    })
}
