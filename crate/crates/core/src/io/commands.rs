use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::files::{read_raw, Manifest, Sidecar, RAW_FORMAT};
use super::logs::{losses_csv, metrics_csv, residuals_csv};
use super::png::write_png;
use crate::denoiser::{encode_params, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::{FanBeamGeometry, Projector};
use crate::image::SpectralImageStack;
use crate::metrics::{evaluate, MetricReport};
use crate::phantom::{make_phantom, simulate_counts, SpectralSinogram};
use crate::recon::{reconstruct, Algorithm, Reconstruction};

pub const MANIFEST_NAME: &str = "manifest.json";
/// Tag of the s2s run without the spectral prior.
pub const NO_PRIOR_TAG: &str = "s2s-no-prior";
/// Every reconstruction tag `cmd_metrics` looks for, in output order.
pub const KNOWN_TAGS: [&str; 5] = ["sirt", "tvm", "n2n-post", "s2s", NO_PRIOR_TAG];

pub fn sinogram_name(bin: usize) -> String {
    format!("sinogram_bin{bin}.f32")
}

pub fn truth_name(bin: usize) -> String {
    format!("truth_bin{bin}.f32")
}

pub fn image_name(tag: &str, bin: usize) -> String {
    format!("recon_{tag}_bin{bin}.f32")
}

pub fn run_manifest_name(tag: &str) -> String {
    format!("manifest_{tag}.json")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn sidecar(kind: &str, units: &str, shape: Vec<usize>, bin: usize, edges: &[f64], geometry: &FanBeamGeometry, seed: u64) -> Sidecar {
    Sidecar {
        format: RAW_FORMAT.into(),
        shape,
        kind: kind.into(),
        units: units.into(),
        bin,
        bin_edges_kev: [edges[bin], edges[bin + 1]],
        geometry: geometry.clone(),
        seed,
    }
}

/// Simulate the phantom scan: one sinogram and one ground-truth image per
/// bin, plus `manifest.json`.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    ensure_dir(out)?;
    let geom = config.geometry.build()?;
    let projector = Projector::new(&geom)?;
    let bins = config.noise.bins();
    let phantom = make_phantom(&config.phantom, &geom, bins.num_bins())?;
    let seeds = config.seeds();
    let sino = simulate_counts(&phantom, &projector, &bins, config.noise.mode, seeds.noise)?;
    let mut m = Manifest::new("simulate", config)?;
    let edges = &bins.edges_kev;
    for b in 0..bins.num_bins() {
        let s = sidecar("sinogram", "line integral", vec![sino.views, sino.detectors], b, edges, &geom, seeds.noise);
        m.add_raw(out, &sinogram_name(b), &sino.bins[b], &s)?;
        let n = geom.image_size;
        let s = sidecar("truth", "mm^-1", vec![n, n], b, edges, &geom, seeds.master);
        m.add_raw(out, &truth_name(b), &phantom.truth.bins[b], &s)?;
    }
    m.save(&out.join(MANIFEST_NAME))?;
    Ok(m)
}

/// Simulated data loaded back from disk after the manifest check.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub manifest: Manifest,
    pub sinogram: SpectralSinogram,
    pub truth: SpectralImageStack,
}

pub fn load_simulation(dir: &Path) -> Result<SimulatedData> {
    let manifest = Manifest::load_verified(&dir.join(MANIFEST_NAME))?;
    let num_bins = manifest.edges_kev.len().saturating_sub(1);
    let geom = &manifest.geometry;
    let (mut sino_bins, mut truth_bins) = (Vec::new(), Vec::new());
    for b in 0..num_bins {
        let (s, meta) = read_raw(&dir.join(sinogram_name(b)))?;
        if meta.shape != [geom.num_views(), geom.detector_count] || &meta.geometry != geom {
            return Err(Error::Integrity(format!("{}: sidecar disagrees with the manifest geometry", sinogram_name(b))));
        }
        sino_bins.push(s);
        truth_bins.push(read_raw(&dir.join(truth_name(b)))?.0);
    }
    let sinogram = SpectralSinogram {
        views: geom.num_views(),
        detectors: geom.detector_count,
        bins: sino_bins,
        n0: manifest.config.noise.n0.clone(),
        noise: manifest.noise,
        seed: manifest.seeds.noise,
        clamped: vec![0; num_bins],
    };
    let truth = SpectralImageStack::new(geom.image_size, truth_bins)?;
    Ok(SimulatedData { manifest, sinogram, truth })
}

/// Refuse to reconstruct data simulated for another scanner or bin layout.
fn check_compatible(config: &RunConfig, manifest: &Manifest) -> Result<()> {
    if config.geometry.build()? != manifest.geometry {
        return Err(Error::config("geometry", "does not match the geometry recorded in the input manifest"));
    }
    if config.noise.edges_kev != manifest.edges_kev {
        return Err(Error::config("noise.edges_kev", "do not match the bins recorded in the input manifest"));
    }
    Ok(())
}

fn run_tagged(config: &RunConfig, tag: &str, train: &TrainConfig, data: &SimulatedData, out: &Path) -> Result<Reconstruction> {
    let algorithm = config.recon.algorithm;
    let projector = Projector::new(&data.manifest.geometry)?;
    log::info!("{tag}: reconstructing {} bins", data.sinogram.num_bins());
    let rec = reconstruct(algorithm, &data.sinogram, &projector, &config.recon, train)?;
    ensure_dir(out)?;
    let mut m = Manifest::new(&format!("reconstruct {tag}"), config)?;
    let geom = &data.manifest.geometry;
    let n = geom.image_size;
    for (b, img) in rec.images.bins.iter().enumerate() {
        let s = sidecar(tag, "mm^-1", vec![n, n], b, &data.manifest.edges_kev, geom, config.seed);
        m.add_raw(out, &image_name(tag, b), img, &s)?;
    }
    m.add_file(out, &format!("residuals_{tag}.csv"), &residuals_csv(tag, &rec.residuals)?)?;
    if let Some(net) = &rec.net {
        m.add_file(out, &format!("losses_{tag}.csv"), &losses_csv(tag, &rec.losses)?)?;
        m.add_file(out, &format!("denoiser_{tag}.params"), &encode_params(net)?)?;
    }
    m.save(&out.join(run_manifest_name(tag)))?;
    Ok(rec)
}

/// Reconstruct the simulation in `input` with `config.recon.algorithm` and
/// write images, residual and loss logs to `out`.
pub fn cmd_reconstruct(config: &RunConfig, input: &Path, out: &Path) -> Result<Reconstruction> {
    config.validate()?;
    let data = load_simulation(input)?;
    check_compatible(config, &data.manifest)?;
    run_tagged(config, config.recon.algorithm.name(), &config.train_config(), &data, out)
}

/// Load the reconstruction written under `tag` in `dir`, after its manifest check.
pub fn load_reconstruction(dir: &Path, tag: &str) -> Result<SpectralImageStack> {
    let m = Manifest::load_verified(&dir.join(run_manifest_name(tag)))?;
    let bins = (0..m.edges_kev.len().saturating_sub(1))
        .map(|b| read_raw(&dir.join(image_name(tag, b))).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    SpectralImageStack::new(m.geometry.image_size, bins)
}

/// Score every reconstruction found in `out` against the ground truth in
/// `input`; writes `metrics.csv` with one row per method and bin.
pub fn cmd_metrics(config: &RunConfig, input: &Path, out: &Path) -> Result<Vec<MetricReport>> {
    let data = load_simulation(input)?;
    let mut reports = Vec::new();
    for tag in KNOWN_TAGS {
        if !out.join(run_manifest_name(tag)).exists() {
            continue;
        }
        let stack = load_reconstruction(out, tag)?;
        reports.push(evaluate(tag, &stack, Some(&data.truth), config.roi(), &config.metrics.blur)?);
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument(format!("no reconstructions found in {}", out.display())));
    }
    let path = out.join("metrics.csv");
    fs::write(&path, metrics_csv(&reports)?).map_err(|e| Error::io(&path, e))?;
    Ok(reports)
}

/// Write one raw image as an 8-bit PNG. Without a window the image's own
/// range is used.
pub fn cmd_export_png(image: &Path, window: Option<(f64, f64)>, png: &Path) -> Result<(f64, f64)> {
    let (values, meta) = read_raw(image)?;
    let [h, w] = meta.shape[..] else {
        return Err(Error::shape("export-png", format!("expected a 2-D image, sidecar shape {:?}", meta.shape)));
    };
    let window = match window {
        Some(win) => win,
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(Error::InvalidArgument("image is constant; pass an explicit window".into()));
            }
            (lo, hi)
        }
    };
    write_png(png, &values, w, h, window)?;
    Ok(window)
}

/// s2s with and without the spectral prior and n2n post-processing on the
/// same data; writes all three reconstructions and `ablation.csv`.
pub fn cmd_ablate(config: &RunConfig, input: &Path, out: &Path) -> Result<Vec<MetricReport>> {
    config.validate()?;
    let data = load_simulation(input)?;
    check_compatible(config, &data.manifest)?;
    let variants = [("s2s", Algorithm::S2s, config.train.lambda_s), (NO_PRIOR_TAG, Algorithm::S2s, 0.0), ("n2n-post", Algorithm::N2nPost, config.train.lambda_s)];
    let mut reports = Vec::new();
    for (tag, algorithm, lambda_s) in variants {
        let mut c = config.clone();
        c.recon.algorithm = algorithm;
        c.train.lambda_s = lambda_s;
        let rec = run_tagged(&c, tag, &c.train_config(), &data, out)?;
        reports.push(evaluate(tag, &rec.images, Some(&data.truth), config.roi(), &config.metrics.blur)?);
    }
    let path = out.join("ablation.csv");
    fs::write(&path, metrics_csv(&reports)?).map_err(|e| Error::io(&path, e))?;
    Ok(reports)
}
