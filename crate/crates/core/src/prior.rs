//! Cross-energy structural-similarity prior.
//!
//! Every bin image is min-max normalized and compared by windowed SSIM with
//! a reference built from the mean over bins. Because bins of one object share
//! their structure and differ mostly in intensity, the loss
//! `1 - mean_i SSIM(norm(x_i), ref)` pulls the noisier bins toward the
//! structure of the better-conditioned average.
//!
//! SSIM uses a Gaussian window (11 taps, sigma 1.5) evaluated only where the
//! window lies fully inside the image, and is averaged over those positions.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SpectralImageStack;
use crate::tensor::{Graph, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams { window_size: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range: 1.0 }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window_size as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.sigma <= 0.0 || self.k1 <= 0.0 || self.k2 <= 0.0 || self.data_range <= 0.0 {
            return Err(Error::config("ssim", "window, sigma, k1, k2 and data_range must be positive"));
        }
        Ok(())
    }
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `(x - min) / (max - min)`; a constant image maps to zeros.
pub fn minmax_normalize(x: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(x);
    if hi > lo {
        let s = 1.0 / (hi - lo);
        x.iter().map(|v| (v - lo) * s).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Normalized mean over bins.
pub fn full_spectrum_reference(stack: &SpectralImageStack) -> Result<Vec<f64>> {
    if stack.num_bins() == 0 {
        return Err(Error::InvalidArgument("reference needs at least one bin".into()));
    }
    let n = stack.num_bins() as f64;
    let mut mean = vec![0.0; stack.size * stack.size];
    for b in &stack.bins {
        for (m, v) in mean.iter_mut().zip(b) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    Ok(minmax_normalize(&mean))
}

/// Valid-mode separable filter: `(h, w)` -> `(h - k + 1, w - k + 1)`.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &x[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (t, tap) in taps.iter().enumerate() {
            let src = &rows[(r + t) * ow..(r + t + 1) * ow];
            for (o, v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src) {
                *o += tap * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`].
fn filter_valid_adjoint(g: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for r in 0..oh {
        for (t, tap) in taps.iter().enumerate() {
            let dst = &mut rows[(r + t) * ow..(r + t + 1) * ow];
            for (d, v) in dst.iter_mut().zip(&g[r * ow..(r + 1) * ow]) {
                *d += tap * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..ow {
            let v = rows[r * ow + c];
            for (t, tap) in taps.iter().enumerate() {
                out[r * w + c + t] += tap * v;
            }
        }
    }
    out
}

/// Partial derivatives of the mean SSIM with respect to the five filtered
/// statistics, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct SsimCache {
    taps: Vec<f64>,
    d_ma: Vec<f64>,
    d_mb: Vec<f64>,
    d_eaa: Vec<f64>,
    d_ebb: Vec<f64>,
    d_eab: Vec<f64>,
}

pub(crate) fn ssim_forward(a: &[f64], b: &[f64], h: usize, w: usize, params: &SsimParams) -> Result<(f64, SsimCache)> {
    let taps = params.taps();
    let k = taps.len();
    if h < k || w < k {
        return Err(Error::shape("ssim", format!("image {h}x{w} smaller than {k}x{k} window")));
    }
    let (c1, c2) = (params.c1(), params.c2());
    let ma = filter_valid(a, h, w, &taps);
    let mb = filter_valid(b, h, w, &taps);
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let eaa = filter_valid(&sq(a, a), h, w, &taps);
    let ebb = filter_valid(&sq(b, b), h, w, &taps);
    let eab = filter_valid(&sq(a, b), h, w, &taps);
    let p = ma.len();
    let inv_p = 1.0 / p as f64;
    let mut total = 0.0;
    let mut cache = SsimCache {
        taps,
        d_ma: vec![0.0; p],
        d_mb: vec![0.0; p],
        d_eaa: vec![0.0; p],
        d_ebb: vec![0.0; p],
        d_eab: vec![0.0; p],
    };
    for i in 0..p {
        let (x, y) = (ma[i], mb[i]);
        let a1 = 2.0 * x * y + c1;
        let a2 = 2.0 * (eab[i] - x * y) + c2;
        let b1 = x * x + y * y + c1;
        let b2 = (eaa[i] - x * x) + (ebb[i] - y * y) + c2;
        let inv = 1.0 / (b1 * b2);
        let s = a1 * a2 * inv;
        total += s;
        cache.d_ma[i] = inv_p * (2.0 * y * a2 * inv - 2.0 * y * a1 * inv - s * 2.0 * x / b1 + s * 2.0 * x / b2);
        cache.d_mb[i] = inv_p * (2.0 * x * a2 * inv - 2.0 * x * a1 * inv - s * 2.0 * y / b1 + s * 2.0 * y / b2);
        cache.d_eaa[i] = -inv_p * s / b2;
        cache.d_ebb[i] = -inv_p * s / b2;
        cache.d_eab[i] = inv_p * 2.0 * a1 * inv;
    }
    Ok((total * inv_p, cache))
}

/// Gradients of the mean SSIM with respect to both images.
pub(crate) fn ssim_backward(cache: &SsimCache, a: &[f64], b: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let t = &cache.taps;
    let ga_m = filter_valid_adjoint(&cache.d_ma, h, w, t);
    let gb_m = filter_valid_adjoint(&cache.d_mb, h, w, t);
    let g_aa = filter_valid_adjoint(&cache.d_eaa, h, w, t);
    let g_bb = filter_valid_adjoint(&cache.d_ebb, h, w, t);
    let g_ab = filter_valid_adjoint(&cache.d_eab, h, w, t);
    let da = (0..a.len()).map(|i| ga_m[i] + 2.0 * a[i] * g_aa[i] + b[i] * g_ab[i]).collect();
    let db = (0..b.len()).map(|i| gb_m[i] + 2.0 * b[i] * g_bb[i] + a[i] * g_ab[i]).collect();
    (da, db)
}

/// Mean windowed SSIM of two `h x w` images.
pub fn ssim(a: &[f64], b: &[f64], h: usize, w: usize, params: &SsimParams) -> Result<f64> {
    if a.len() != h * w || b.len() != h * w {
        return Err(Error::shape("ssim", format!("images of {} and {} values for {h}x{w}", a.len(), b.len())));
    }
    Ok(ssim_forward(a, b, h, w, params)?.0)
}

/// Spectral structural-similarity loss of a whole stack, with the reference
/// taken from the same stack.
pub fn l_ss(stack: &SpectralImageStack, params: &SsimParams) -> Result<f64> {
    let reference = full_spectrum_reference(stack)?;
    l_ss_with_reference(stack, &reference, params)
}

pub fn l_ss_with_reference(stack: &SpectralImageStack, reference: &[f64], params: &SsimParams) -> Result<f64> {
    let n = stack.size;
    let mut acc = 0.0;
    for b in &stack.bins {
        acc += ssim(&minmax_normalize(b), reference, n, n, params)?;
    }
    Ok(1.0 - acc / stack.num_bins() as f64)
}

/// Differentiable L_SS over a `(I, 1, h, w)` node. With `reference = None` the
/// reference is derived from `stack` on the tape (mean over bins, then
/// normalized); otherwise the given node is used as an already-normalized
/// reference of batch one.
pub fn l_ss_on_graph(g: &mut Graph, stack: Var, reference: Option<Var>, params: &SsimParams) -> Result<Var> {
    let normed = g.minmax_normalize(stack)?;
    let reference = match reference {
        Some(r) => r,
        None => {
            let mean = g.batch_mean(stack)?;
            g.minmax_normalize(mean)?
        }
    };
    let s = g.ssim_mean(normed, reference, params)?;
    Ok(g.affine(s, -1.0, 1.0))
}
