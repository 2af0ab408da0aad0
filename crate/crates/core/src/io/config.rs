use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoiser::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::metrics::{BlurParams, Roi};
use crate::phantom::{EnergyBinSpec, NoiseMode, PhantomConfig};
use crate::recon::{Algorithm, ReconConfig};

/// Fan-beam scanner with views spread uniformly over a full turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// mm
    pub source_to_detector: f64,
    /// mm
    pub source_to_isocenter: f64,
    pub detector_count: usize,
    /// mm
    pub detector_pitch: f64,
    pub num_views: usize,
    pub image_size: usize,
    /// mm
    pub pixel_size: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            source_to_detector: 350.0,
            source_to_isocenter: 210.0,
            detector_count: 128,
            detector_pitch: 0.6,
            num_views: 180,
            image_size: 128,
            pixel_size: 0.25,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> Result<FanBeamGeometry> {
        if self.num_views == 0 {
            return Err(Error::config("geometry.num_views", "at least one view is required"));
        }
        FanBeamGeometry::uniform(
            self.source_to_detector,
            self.source_to_isocenter,
            self.detector_count,
            self.detector_pitch,
            self.num_views,
            self.image_size,
            self.pixel_size,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// I+1 increasing bin edges, keV.
    pub edges_kev: Vec<f64>,
    /// Unattenuated photon count per detector cell, one per bin.
    pub n0: Vec<f64>,
    pub mode: NoiseMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let spec = EnergyBinSpec::desk_default();
        NoiseConfig { edges_kev: spec.edges_kev, n0: spec.n0, mode: NoiseMode::Poisson }
    }
}

impl NoiseConfig {
    pub fn bins(&self) -> EnergyBinSpec {
        EnergyBinSpec { edges_kev: self.edges_kev.clone(), n0: self.n0.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Blur ROI; the whole image when absent.
    pub roi: Option<Roi>,
    pub blur: BlurParams,
}

/// Seeds of every stochastic component, all drawn from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedSeeds {
    pub master: u64,
    pub noise: u64,
    pub train: u64,
    pub net_init: u64,
}

impl DerivedSeeds {
    pub fn from_master(master: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master);
        let noise = rng.next_u64();
        let train = rng.next_u64();
        let net_init = rng.next_u64();
        DerivedSeeds { master, noise, train, net_init }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; noise, mask sampling and network init derive from it.
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub phantom: PhantomConfig,
    pub noise: NoiseConfig,
    pub recon: ReconConfig,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            geometry: GeometryConfig::default(),
            phantom: PhantomConfig::default(),
            noise: NoiseConfig::default(),
            recon: ReconConfig::default(),
            train: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse and validate. Syntax and unknown-key errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.geometry.build()?;
        let bins = self.noise.bins();
        bins.validate()?;
        self.phantom.validate(bins.num_bins(), geom.half_extent())?;
        self.recon.validate()?;
        self.train.validate()?;
        if matches!(self.recon.algorithm, Algorithm::N2nPost | Algorithm::S2s) && geom.image_size % 4 != 0 {
            return Err(Error::config("geometry.image_size", "the denoiser needs a multiple of 4"));
        }
        if let Some(roi) = self.metrics.roi {
            if roi.height < 3 || roi.width < 3 || roi.row + roi.height > geom.image_size || roi.col + roi.width > geom.image_size {
                return Err(Error::config("metrics.roi", "must be at least 3x3 and inside the image"));
            }
        }
        Ok(())
    }

    /// Canonical form: fixed field order, compact.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex sha256 of the canonical form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn seeds(&self) -> DerivedSeeds {
        DerivedSeeds::from_master(self.seed)
    }

    /// Training settings with the derived seeds filled in.
    pub fn train_config(&self) -> TrainConfig {
        let s = self.seeds();
        let mut t = self.train.clone();
        t.seed = s.train;
        t.net.init_seed = s.net_init;
        t
    }

    pub fn roi(&self) -> Roi {
        self.metrics.roi.unwrap_or(Roi::full(self.geometry.image_size))
    }
}

/// JSON schema of [`RunConfig`].
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schema serializes")
}
