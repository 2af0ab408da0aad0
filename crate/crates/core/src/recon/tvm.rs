//! SIRT alternated with descent on smoothed isotropic total variation.

use crate::error::Result;
use crate::geometry::Projector;
use crate::image::SpectralImageStack;
use crate::phantom::SpectralSinogram;

use super::sirt::{check_divergence, SirtOperator, SirtOutput};
use super::ReconConfig;

pub const TV_EPSILON: f64 = 1e-8;

/// `sum sqrt(dx^2 + dy^2 + eps)` with forward differences and replicated
/// borders.
pub fn tv_value(img: &[f64], n: usize, eps: f64) -> f64 {
    let mut s = 0.0;
    for r in 0..n {
        for c in 0..n {
            let v = img[r * n + c];
            let dx = if c + 1 < n { img[r * n + c + 1] - v } else { 0.0 };
            let dy = if r + 1 < n { img[(r + 1) * n + c] - v } else { 0.0 };
            s += (dx * dx + dy * dy + eps).sqrt();
        }
    }
    s
}

pub fn tv_gradient(img: &[f64], n: usize, eps: f64) -> Vec<f64> {
    let mut g = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let i = r * n + c;
            let v = img[i];
            let dx = if c + 1 < n { img[i + 1] - v } else { 0.0 };
            let dy = if r + 1 < n { img[i + n] - v } else { 0.0 };
            let norm = (dx * dx + dy * dy + eps).sqrt();
            let (gx, gy) = (dx / norm, dy / norm);
            g[i] -= gx + gy;
            if c + 1 < n {
                g[i + 1] += gx;
            }
            if r + 1 < n {
                g[i + n] += gy;
            }
        }
    }
    g
}

/// Per bin: one SIRT sweep, then `tv_iterations` normalized TV descent steps
/// whose length is `tv_weight` times the size of that sweep's change.
pub fn tvm_reconstruct(sino: &SpectralSinogram, projector: &Projector, config: &ReconConfig) -> Result<SirtOutput> {
    config.validate()?;
    let op = SirtOperator::new(projector);
    let n = projector.geometry().image_size;
    let mut images = SpectralImageStack::zeros(n, sino.num_bins());
    let mut residuals = Vec::with_capacity(sino.num_bins());
    for (b, y) in sino.bins.iter().enumerate() {
        let x = &mut images.bins[b];
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut history = Vec::new();
        for _ in 0..config.sirt_iterations {
            let before = x.clone();
            history.push(op.sweep(y, x, None, config.relaxation, config.nonnegative)?);
            check_divergence(&history, b)?;
            let change = x.iter().zip(&before).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
            let step = config.tv_weight * change;
            if step > 0.0 {
                for _ in 0..config.tv_iterations {
                    let g = tv_gradient(x, n, TV_EPSILON);
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if gn == 0.0 {
                        break;
                    }
                    for (xv, gv) in x.iter_mut().zip(&g) {
                        *xv -= step * gv / gn;
                    }
                }
                if config.nonnegative {
                    x.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
            if let (Some(t), Some(&r)) = (config.residual_tolerance, history.last()) {
                if y_norm > 0.0 && r / y_norm < t {
                    break;
                }
            }
        }
        history.push(op.residual_norm(y, x)?);
        check_divergence(&history, b)?;
        residuals.push(history);
    }
    Ok(SirtOutput { images, residuals })
}
