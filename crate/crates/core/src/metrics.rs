//! Image quality: a no-reference blur measure and PSNR/RMSE against ground
//! truth.
//!
//! The blur measure follows the cumulative probability of blur detection
//! idea: edges are found with a thresholded Sobel magnitude, the width of
//! each edge is the distance between the local extrema that bracket it along
//! the dominant gradient axis, and an edge counts as blurred when
//! `1 - exp(-(w / w_jnb)^beta)` exceeds the cutoff. The reported value is the
//! blurred fraction, so smaller means sharper.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SpectralImageStack;
use crate::prior::minmax_normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Roi {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Roi {
    pub fn full(size: usize) -> Self {
        Roi { row: 0, col: 0, height: size, width: size }
    }

    fn check(&self, size: usize) -> Result<()> {
        if self.height < 3 || self.width < 3 || self.row + self.height > size || self.col + self.width > size {
            return Err(Error::InvalidArgument(format!("ROI {self:?} must be at least 3x3 and inside the {size}x{size} image")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct BlurParams {
    /// Edge threshold relative to the largest Sobel magnitude in the ROI.
    pub threshold: f64,
    /// Just-noticeable blur width in pixels.
    pub w_jnb: f64,
    pub beta: f64,
    pub cutoff: f64,
}

impl Default for BlurParams {
    fn default() -> Self {
        BlurParams { threshold: 0.1, w_jnb: 3.0, beta: 3.6, cutoff: 0.63 }
    }
}

/// Edge width in pixels along one axis: walk away from `i` in both directions
/// while the profile keeps moving in the direction of `sign`.
fn edge_width(profile: &[f64], i: usize, sign: f64) -> usize {
    let mut hi = i;
    while hi + 1 < profile.len() && (profile[hi + 1] - profile[hi]) * sign > 0.0 {
        hi += 1;
    }
    let mut lo = i;
    while lo > 0 && (profile[lo] - profile[lo - 1]) * sign > 0.0 {
        lo -= 1;
    }
    hi - lo
}

/// Fraction of detected edges in `roi` of the `size x size` image at which
/// blur is detectable, or `None` when the ROI has no edges.
pub fn blur_fraction(image: &[f64], size: usize, roi: Roi, params: &BlurParams) -> Result<Option<f64>> {
    if image.len() != size * size {
        return Err(Error::shape("blur_fraction", format!("{} values for a {size}x{size} image", image.len())));
    }
    roi.check(size)?;
    let (h, w) = (roi.height, roi.width);
    let patch: Vec<f64> = (0..h).flat_map(|r| image[(roi.row + r) * size + roi.col..][..w].iter().copied()).collect();
    if patch.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("blur_fraction: non-finite pixel in ROI".into()));
    }
    let p = minmax_normalize(&patch);
    let at = |r: usize, c: usize| p[r * w + c];
    let mut grads = Vec::new();
    let mut max_mag: f64 = 0.0;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1)) - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1)) - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            let mag = gx.hypot(gy);
            max_mag = max_mag.max(mag);
            grads.push((r, c, gx, gy, mag));
        }
    }
    if max_mag == 0.0 {
        return Ok(None);
    }
    let (mut edges, mut blurred) = (0usize, 0usize);
    let mut column = vec![0.0; h];
    for &(r, c, gx, gy, mag) in &grads {
        if mag <= params.threshold * max_mag {
            continue;
        }
        edges += 1;
        let width = if gx.abs() >= gy.abs() {
            edge_width(&p[r * w..(r + 1) * w], c, gx.signum())
        } else {
            for (rr, v) in column.iter_mut().enumerate() {
                *v = at(rr, c);
            }
            edge_width(&column, r, gy.signum())
        };
        let prob = 1.0 - (-(width as f64 / params.w_jnb).powf(params.beta)).exp();
        if prob > params.cutoff {
            blurred += 1;
        }
    }
    Ok(Some(blurred as f64 / edges as f64))
}

/// PSNR in dB; identical images give `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(&self) -> f64 {
        match self {
            Psnr::Finite(v) => *v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape("mse", format!("{} vs {} values", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(mse(a, b)?.sqrt())
}

pub fn psnr(a: &[f64], b: &[f64], data_range: f64) -> Result<Psnr> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::InvalidArgument(format!("data_range must be positive, got {data_range}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(10.0 * (data_range * data_range / m).log10()))
}

/// Range of the ground truth, used as PSNR data range (1 for a flat image).
pub fn truth_range(truth: &[f64]) -> f64 {
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinMetrics {
    pub bin: usize,
    pub blur_fraction: Option<f64>,
    pub psnr: Option<Psnr>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub bins: Vec<BinMetrics>,
}

impl MetricReport {
    /// Mean finite PSNR over bins.
    pub fn mean_psnr(&self) -> Option<f64> {
        let v: Vec<f64> = self.bins.iter().filter_map(|b| b.psnr.map(|p| p.db())).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn evaluate(
    method: &str,
    stack: &SpectralImageStack,
    truth: Option<&SpectralImageStack>,
    roi: Roi,
    params: &BlurParams,
) -> Result<MetricReport> {
    if let Some(t) = truth {
        if t.size != stack.size || t.num_bins() != stack.num_bins() {
            return Err(Error::shape("metrics", "reconstruction and ground truth differ in shape"));
        }
    }
    let mut bins = Vec::with_capacity(stack.num_bins());
    for (b, img) in stack.bins.iter().enumerate() {
        let blur = blur_fraction(img, stack.size, roi, params)?;
        let (p, r) = match truth {
            Some(t) => (Some(psnr(img, &t.bins[b], truth_range(&t.bins[b]))?), Some(rmse(img, &t.bins[b])?)),
            None => (None, None),
        };
        bins.push(BinMetrics { bin: b, blur_fraction: blur, psnr: p, rmse: r });
    }
    Ok(MetricReport { method: method.to_string(), bins })
}
