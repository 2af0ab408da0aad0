use crate::error::{Error, Result};
use crate::geometry::{sirt_row_col_sums, Projector, SirtWeights};
use crate::image::SpectralImageStack;
use crate::phantom::SpectralSinogram;

use super::ReconConfig;

/// Residual growth beyond this factor of the initial residual aborts a run.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Projector plus the SIRT normalizations of its system matrix.
pub struct SirtOperator<'a> {
    pub projector: &'a Projector,
    pub weights: SirtWeights,
}

impl<'a> SirtOperator<'a> {
    pub fn new(projector: &'a Projector) -> Self {
        SirtOperator { projector, weights: sirt_row_col_sums(projector) }
    }

    /// `C^-1 A^T R^-1 (y - A x)` and `||y - A x||`.
    pub fn data_direction(&self, y: &[f64], x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let ax = self.projector.forward(x)?;
        if y.len() != ax.len() {
            return Err(Error::shape("sirt", format!("sinogram has {} values, geometry has {} rays", y.len(), ax.len())));
        }
        let mut norm2 = 0.0;
        let weighted: Vec<f64> = y
            .iter()
            .zip(&ax)
            .zip(&self.weights.row_sums)
            .map(|((yv, av), r)| {
                let d = yv - av;
                norm2 += d * d;
                d / r
            })
            .collect();
        let mut bp = self.projector.back(&weighted)?;
        for (b, c) in bp.iter_mut().zip(&self.weights.col_sums) {
            *b /= c;
        }
        Ok((bp, norm2.sqrt()))
    }

    /// One sweep `x <- x + omega * (C^-1 A^T R^-1 (y - A x) + lambda1 (z - x))`,
    /// followed by the optional clamp to non-negative values. Without `z` the
    /// coupling term is absent and this is a plain SIRT iteration. Returns the
    /// residual norm of `x` before the update.
    pub fn sweep(
        &self,
        y: &[f64],
        x: &mut [f64],
        coupling: Option<(&[f64], f64)>,
        omega: f64,
        nonnegative: bool,
    ) -> Result<f64> {
        let (dir, res) = self.data_direction(y, x)?;
        match coupling {
            None => {
                for (xv, d) in x.iter_mut().zip(&dir) {
                    *xv += omega * d;
                }
            }
            Some((z, lambda1)) => {
                for ((xv, d), zv) in x.iter_mut().zip(&dir).zip(z) {
                    *xv += omega * (d + lambda1 * (zv - *xv));
                }
            }
        }
        if nonnegative {
            for xv in x.iter_mut() {
                if *xv < 0.0 {
                    *xv = 0.0;
                }
            }
        }
        Ok(res)
    }

    pub fn residual_norm(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        let ax = self.projector.forward(x)?;
        Ok(y.iter().zip(&ax).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }
}

/// Residual bookkeeping shared by the iterative methods.
pub(crate) fn check_divergence(history: &[f64], bin: usize) -> Result<()> {
    if let (Some(&first), Some(&last)) = (history.first(), history.last()) {
        if !last.is_finite() || (first > 0.0 && last > DIVERGENCE_FACTOR * first) {
            return Err(Error::Numeric(format!(
                "bin {bin}: residual grew from {first:.4e} to {last:.4e} after {} sweeps",
                history.len() - 1
            )));
        }
    }
    Ok(())
}

fn below_tolerance(history: &[f64], y_norm: f64, tol: Option<f64>) -> bool {
    match (tol, history.last()) {
        (Some(t), Some(&r)) if y_norm > 0.0 => r / y_norm < t,
        _ => false,
    }
}

#[derive(Debug, Clone)]
pub struct SirtOutput {
    pub images: SpectralImageStack,
    /// Per bin, `||y - A x_k||` for k = 0..=iterations.
    pub residuals: Vec<Vec<f64>>,
}

/// Plain SIRT from a zero image, `config.sirt_iterations` sweeps per bin (or
/// fewer when `residual_tolerance` is reached).
pub fn sirt_run(sino: &SpectralSinogram, projector: &Projector, config: &ReconConfig) -> Result<SirtOutput> {
    config.validate()?;
    let op = SirtOperator::new(projector);
    let size = projector.geometry().image_size;
    let mut images = SpectralImageStack::zeros(size, sino.num_bins());
    let mut residuals = Vec::with_capacity(sino.num_bins());
    for (b, y) in sino.bins.iter().enumerate() {
        let x = &mut images.bins[b];
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut history = Vec::with_capacity(config.sirt_iterations + 1);
        for _ in 0..config.sirt_iterations {
            history.push(op.sweep(y, x, None, config.relaxation, config.nonnegative)?);
            check_divergence(&history, b)?;
            if below_tolerance(&history, y_norm, config.residual_tolerance) {
                break;
            }
        }
        history.push(op.residual_norm(y, x)?);
        check_divergence(&history, b)?;
        residuals.push(history);
    }
    Ok(SirtOutput { images, residuals })
}

/// State of the split iteration: current reconstruction `x`, denoised
/// auxiliary `z` (absent before the first denoising), outer index `k`.
#[derive(Debug, Clone)]
pub struct SplitState {
    pub x: SpectralImageStack,
    pub z: Option<SpectralImageStack>,
    pub k: usize,
    pub residuals: Vec<Vec<f64>>,
}

impl SplitState {
    pub fn zeros(size: usize, num_bins: usize) -> Self {
        SplitState { x: SpectralImageStack::zeros(size, num_bins), z: None, k: 0, residuals: vec![Vec::new(); num_bins] }
    }
}

/// `sweeps` coupled data-consistency sweeps on every bin, pulling `x` toward
/// `z` with weight `lambda1` (relative to the SIRT diagonal scaling).
pub fn x_update(state: &mut SplitState, sino: &SpectralSinogram, op: &SirtOperator, config: &ReconConfig, sweeps: usize) -> Result<()> {
    if state.x.num_bins() != sino.num_bins() {
        return Err(Error::InvalidArgument(format!("state has {} bins, sinogram {}", state.x.num_bins(), sino.num_bins())));
    }
    if let Some(z) = &state.z {
        if z.num_bins() != state.x.num_bins() || z.size != state.x.size {
            return Err(Error::shape("x_update", "x and z stacks differ in shape"));
        }
    }
    for (b, y) in sino.bins.iter().enumerate() {
        let coupling = state.z.as_ref().map(|z| (z.bins[b].as_slice(), config.lambda1));
        let history = &mut state.residuals[b];
        let x = &mut state.x.bins[b];
        for _ in 0..sweeps {
            history.push(op.sweep(y, x, coupling, config.relaxation, config.nonnegative)?);
            check_divergence(history, b)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FanBeamGeometry;
    use crate::phantom::NoiseMode;

    fn setup() -> (Projector, SpectralSinogram) {
        let g = FanBeamGeometry::uniform(350.0, 210.0, 24, 0.6, 20, 16, 0.5).unwrap();
        let p = Projector::new(&g).unwrap();
        let x: Vec<f64> = (0..256).map(|i| if (i / 16) % 5 < 3 && i % 7 < 4 { 0.02 } else { 0.0 }).collect();
        let y = p.forward(&x).unwrap();
        let sino = SpectralSinogram {
            views: 20,
            detectors: 24,
            bins: vec![y.clone(), y.iter().map(|v| v * 0.5).collect()],
            n0: vec![1.0; 2],
            noise: NoiseMode::Off,
            seed: 0,
            clamped: vec![0; 2],
        };
        (p, sino)
    }

    #[test]
    fn zero_sinogram_stays_zero() {
        let (p, mut sino) = setup();
        for b in &mut sino.bins {
            b.fill(0.0);
        }
        let out = sirt_run(&sino, &p, &ReconConfig { sirt_iterations: 5, ..Default::default() }).unwrap();
        assert!(out.images.bins.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_zero_matches_plain_sweep_bitwise() {
        let (p, sino) = setup();
        let op = SirtOperator::new(&p);
        let mut a = vec![0.001; 256];
        let mut b = a.clone();
        let z = vec![0.5; 256];
        op.sweep(&sino.bins[0], &mut a, None, 1.0, true).unwrap();
        op.sweep(&sino.bins[0], &mut b, Some((&z, 0.0)), 1.0, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn consistent_fixed_point_is_unchanged() {
        let (p, _) = setup();
        let op = SirtOperator::new(&p);
        let x: Vec<f64> = (0..256).map(|i| (i % 11) as f64 * 0.001).collect();
        let y = p.forward(&x).unwrap();
        let mut x2 = x.clone();
        op.sweep(&y, &mut x2, Some((&x, 0.3)), 1.0, false).unwrap();
        for (a, b) in x.iter().zip(&x2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_decreases_noise_free() {
        let (p, sino) = setup();
        let out = sirt_run(&sino, &p, &ReconConfig { sirt_iterations: 30, ..Default::default() }).unwrap();
        for h in &out.residuals {
            assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{h:?}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        assert!(check_divergence(&[1.0, 20.0], 0).is_err());
        assert!(check_divergence(&[1.0, f64::NAN], 0).is_err());
        assert!(check_divergence(&[1.0, 0.5], 0).is_ok());
    }
}
