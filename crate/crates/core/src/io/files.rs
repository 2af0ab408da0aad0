use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DerivedSeeds, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::FanBeamGeometry;
use crate::phantom::NoiseMode;

pub const RAW_FORMAT: &str = "f32le-row-major";
pub const MANIFEST_FORMAT: &str = "specrecon-manifest-v1";

/// JSON description stored next to every raw array as `<name>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    /// `[rows, cols]`: `[views, detectors]` for a sinogram, `[size, size]` for an image.
    pub shape: Vec<usize>,
    /// "sinogram", "truth" or the tag of the reconstruction.
    pub kind: String,
    pub units: String,
    pub bin: usize,
    /// Lower and upper edge of this bin, keV.
    pub bin_edges_kev: [f64; 2],
    pub geometry: FanBeamGeometry,
    pub seed: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_f32(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Integrity(format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

/// Write `values` as raw f32 to `path` plus its sidecar; returns the raw bytes.
pub fn write_raw(path: &Path, values: &[f64], sidecar: &Sidecar) -> Result<Vec<u8>> {
    let n: usize = sidecar.shape.iter().product();
    if n != values.len() {
        return Err(Error::shape("write_raw", format!("{} values for shape {:?}", values.len(), sidecar.shape)));
    }
    let bytes = encode_f32(values);
    write_file(path, &bytes)?;
    let meta = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    write_file(&sidecar_path(path), meta.as_bytes())?;
    Ok(bytes)
}

pub fn read_raw(path: &Path) -> Result<(Vec<f64>, Sidecar)> {
    let meta = read_file(&sidecar_path(path))?;
    let sidecar: Sidecar = serde_json::from_slice(&meta)?;
    if sidecar.format != RAW_FORMAT {
        return Err(Error::Integrity(format!("{}: unknown format `{}`", path.display(), sidecar.format)));
    }
    let values = decode_f32(&read_file(path)?)?;
    let n: usize = sidecar.shape.iter().product();
    if values.len() != n {
        return Err(Error::Integrity(format!("{}: {} values, sidecar shape {:?}", path.display(), values.len(), sidecar.shape)));
    }
    Ok((values, sidecar))
}

/// Record of one command's outputs. File hashes cover the raw arrays and
/// their sidecars, keyed by file name relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: DerivedSeeds,
    pub noise: NoiseMode,
    pub geometry: FanBeamGeometry,
    pub edges_kev: Vec<f64>,
    pub config: RunConfig,
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Result<Self> {
        Ok(Manifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            config_hash: config.hash(),
            seeds: config.seeds(),
            noise: config.noise.mode,
            geometry: config.geometry.build()?,
            edges_kev: config.noise.edges_kev.clone(),
            config: config.clone(),
            files: BTreeMap::new(),
        })
    }

    /// Write `bytes` to `dir/name` and record its hash.
    pub fn add_file(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        write_file(&dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Write a raw array and its sidecar and record both.
    pub fn add_raw(&mut self, dir: &Path, name: &str, values: &[f64], sidecar: &Sidecar) -> Result<()> {
        let path = dir.join(name);
        let bytes = write_raw(&path, values, sidecar)?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        let side = sidecar_path(&path);
        let side_bytes = read_file(&side)?;
        let side_name = side.file_name().expect("file name").to_string_lossy().into_owned();
        self.files.insert(side_name, sha256_hex(&side_bytes));
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, serde_json::to_string_pretty(self).expect("manifest serializes").as_bytes())
    }

    /// Load and check every recorded hash against the files next to it.
    pub fn load_verified(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(&read_file(path)?)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Integrity(format!("{}: unknown format `{}`", path.display(), m.format)));
        }
        if m.config.hash() != m.config_hash {
            return Err(Error::Integrity(format!("{}: config hash does not match the recorded config", path.display())));
        }
        let dir = path.parent().unwrap_or(Path::new("."));
        for (name, want) in &m.files {
            let got = sha256_hex(&read_file(&dir.join(name))?);
            if &got != want {
                return Err(Error::Integrity(format!("{name}: sha256 {got} differs from manifest {want}")));
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_encoding_round_trips_representable_values() {
        let v = vec![0.0, -1.5, 0.007, 1e-30, 3.0e38];
        let back = decode_f32(&encode_f32(&v)).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(encode_f32(&[1.0]), 1.0f32.to_le_bytes().to_vec());
        assert!(decode_f32(&[0, 0, 0]).is_err());
    }
}
