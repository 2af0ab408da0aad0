//! Split iteration: data-consistency sweeps toward the denoised image,
//! alternated with training the denoiser on the current reconstruction.

use crate::denoiser::{DenoiserNet, LossReport, TrainConfig, Trainer};
use crate::error::Result;
use crate::geometry::Projector;
use crate::image::SpectralImageStack;
use crate::phantom::SpectralSinogram;
use crate::prior::full_spectrum_reference;

use super::sirt::{x_update, SirtOperator, SplitState};
use super::ReconConfig;

#[derive(Debug, Clone)]
pub struct S2sOutput {
    /// Final denoised reconstruction `f(x)`.
    pub images: SpectralImageStack,
    /// Data-consistent iterate `x` before the last denoising.
    pub iterate: SpectralImageStack,
    pub losses: Vec<LossReport>,
    pub residuals: Vec<Vec<f64>>,
    /// Trained denoiser.
    pub net: DenoiserNet,
}

/// Schedule of one split run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSchedule {
    pub outer: usize,
    pub sweeps: usize,
    pub epochs: usize,
    /// Couple the sweeps to the denoised image of the previous outer iteration.
    pub feedback: bool,
}

impl SplitSchedule {
    pub fn s2s(recon: &ReconConfig, train: &TrainConfig) -> Self {
        SplitSchedule { outer: recon.outer_iterations, sweeps: recon.sweeps_per_outer, epochs: train.epochs_per_outer, feedback: true }
    }

    pub fn post_processing(recon: &ReconConfig, train: &TrainConfig) -> Self {
        SplitSchedule { outer: 1, sweeps: recon.sirt_iterations, epochs: train.epochs, feedback: false }
    }
}

pub fn split_reconstruct(
    sino: &SpectralSinogram,
    projector: &Projector,
    config: &ReconConfig,
    train: &TrainConfig,
    schedule: SplitSchedule,
) -> Result<S2sOutput> {
    config.validate()?;
    let op = SirtOperator::new(projector);
    let mut state = SplitState::zeros(projector.geometry().image_size, sino.num_bins());
    let mut trainer = Trainer::from_config(train.clone())?;
    let mut losses = Vec::new();
    let mut z = None;
    for k in 0..schedule.outer {
        state.k = k;
        if schedule.feedback {
            state.z = z.take();
        }
        x_update(&mut state, sino, &op, config, schedule.sweeps)?;
        let reference = full_spectrum_reference(&state.x)?;
        losses.extend(trainer.run_epochs(&state.x, &reference, schedule.epochs)?);
        z = Some(trainer.denoise(&state.x)?);
    }
    for (b, h) in state.residuals.iter_mut().enumerate() {
        h.push(op.residual_norm(&sino.bins[b], &state.x.bins[b])?);
    }
    let images = match z {
        Some(z) => z,
        None => trainer.denoise(&state.x)?,
    };
    Ok(S2sOutput { images, iterate: state.x, losses, residuals: state.residuals, net: trainer.net })
}

/// `K` outer iterations of coupled sweeps and warm-started training; the
/// result is the network output on the final iterate.
pub fn s2s_reconstruct(sino: &SpectralSinogram, projector: &Projector, config: &ReconConfig, train: &TrainConfig) -> Result<S2sOutput> {
    split_reconstruct(sino, projector, config, train, SplitSchedule::s2s(config, train))
}

/// SIRT once, then train on that fixed image and return its denoised version.
pub fn n2n_postprocess(sino: &SpectralSinogram, projector: &Projector, config: &ReconConfig, train: &TrainConfig) -> Result<S2sOutput> {
    split_reconstruct(sino, projector, config, train, SplitSchedule::post_processing(config, train))
}
