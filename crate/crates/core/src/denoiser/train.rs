use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::net::{DenoiserNet, NetConfig};
use super::subsample::SubsamplerPair;
use crate::error::{Error, Result};
use crate::image::SpectralImageStack;
use crate::prior::{self, SsimParams};
use crate::tensor::{AdamState, Graph, LrSchedule, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Epochs of a standalone training run (n2n-post).
    pub epochs: usize,
    /// Epochs per outer iteration of the split scheme.
    pub epochs_per_outer: usize,
    pub schedule: LrSchedule,
    pub lambda_s: f64,
    pub lambda_r_max: f64,
    /// `lambda_r` rises linearly from 0 to `lambda_r_max` over these epochs.
    pub lambda_r_ramp_epochs: usize,
    /// Adam steps per epoch, each on a freshly drawn mask (and crop).
    pub steps_per_epoch: usize,
    /// Train on random square crops of this side; smaller images are used whole.
    pub patch_size: Option<usize>,
    /// Mask and crop sampling; set from the run's master seed.
    #[serde(skip)]
    pub seed: u64,
    pub net: NetConfig,
    pub ssim: SsimParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            epochs_per_outer: 10,
            schedule: LrSchedule::default(),
            lambda_s: 0.1,
            lambda_r_max: 1.0,
            lambda_r_ramp_epochs: 20,
            steps_per_epoch: 10,
            patch_size: Some(64),
            seed: 0,
            net: NetConfig::default(),
            ssim: SsimParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.base > 0.0 && s.base.is_finite()) {
            return Err(Error::config("train.schedule.base", format!("learning rate must be positive, got {}", s.base)));
        }
        if !(s.factor > 0.0 && s.factor <= 1.0) {
            return Err(Error::config("train.schedule.factor", format!("must lie in (0, 1], got {}", s.factor)));
        }
        for (field, v) in [("train.lambda_s", self.lambda_s), ("train.lambda_r_max", self.lambda_r_max)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::config("train.steps_per_epoch", "must be at least 1"));
        }
        if let Some(p) = self.patch_size {
            if p % 8 != 0 || p < 2 * self.ssim.window_size {
                return Err(Error::config(
                    "train.patch_size",
                    format!("must be a multiple of 8 and at least {}, got {p}", 2 * self.ssim.window_size),
                ));
            }
        }
        if self.net.widths.contains(&0) {
            return Err(Error::config("train.net.widths", "channel widths must be positive"));
        }
        self.ssim.validate()
    }

    pub fn lambda_r(&self, epoch: usize) -> f64 {
        if self.lambda_r_ramp_epochs == 0 {
            return self.lambda_r_max;
        }
        self.lambda_r_max * (epoch as f64 / self.lambda_r_ramp_epochs as f64).min(1.0)
    }
}

/// Epoch-averaged loss terms. `total = n2n + lambda_s * ssim + lambda_r * residual`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub n2n: f64,
    pub residual: f64,
    pub ssim: f64,
    pub total: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub lr: f64,
}

/// Loss nodes of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub n2n: Var,
    pub residual: Var,
    pub ssim: Var,
    pub total: Var,
}

/// Record all three loss terms for the batch `x` (n, 1, h, w). Item `i` is
/// subsampled with `masks[i]`; the same index lists are used on `x` and on
/// `f(x)`. `reference` is an already-normalized `(1, 1, h, w)` image.
#[allow(clippy::too_many_arguments)]
pub fn record_losses(
    g: &mut Graph,
    net: &DenoiserNet,
    params: &[Var],
    x: Var,
    masks: &[SubsamplerPair],
    reference: Var,
    lambda_s: f64,
    lambda_r: f64,
    ssim: &SsimParams,
) -> Result<LossTerms> {
    let (n, _, h, w) = g.value(x).dims4()?;
    if masks.len() != n || masks.iter().any(|m| (m.height, m.width) != (h, w)) {
        return Err(Error::shape("loss", format!("{} masks do not fit a batch of {n} images of {h}x{w}", masks.len())));
    }
    let (i1, i2) = SubsamplerPair::batch_indices(masks)?;
    let half = vec![n, 1, h / 2, w / 2];
    let s1 = g.gather(x, i1.clone(), half.clone())?;
    let s2 = g.gather(x, i2.clone(), half.clone())?;
    let f1 = net.forward(g, params, s1)?;
    let n2n = g.mse(f1, s2)?;
    let fx = net.forward(g, params, x)?;
    let fs1 = g.gather(fx, i1, half.clone())?;
    let fs2 = g.gather(fx, i2, half)?;
    let lhs = g.sub(f1, s2)?;
    let rhs = g.sub(fs1, fs2)?;
    let residual = g.mse(lhs, rhs)?;
    let ssim = prior::l_ss_on_graph(g, fx, Some(reference), ssim)?;
    let total = g.weighted_sum(&[(n2n, 1.0), (ssim, lambda_s), (residual, lambda_r)])?;
    Ok(LossTerms { n2n, residual, ssim, total })
}

/// A loss value with its gradient for every network parameter (empty in
/// bypass mode).
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grads: Vec<Tensor>,
}

fn eval_single(net: &DenoiserNet, x: &Tensor, masks: &[SubsamplerPair], pick: impl Fn(&LossTerms) -> Var) -> Result<LossEval> {
    let mut g = Graph::new();
    let params = net.params.bind(&mut g);
    let xv = g.constant(x.clone());
    let (_, _, h, w) = x.dims4()?;
    let reference = g.constant(Tensor::zeros(&[1, 1, h, w]));
    let ssim = SsimParams { window_size: h.min(w).min(11), ..SsimParams::default() };
    let terms = record_losses(&mut g, net, &params, xv, masks, reference, 0.0, 0.0, &ssim)?;
    let v = pick(&terms);
    let value = g.value(v).item().expect("scalar loss");
    let grads = if net.bypass { Vec::new() } else { g.backward(v)?.collect(&params)? };
    Ok(LossEval { value, grads })
}

/// `mse(f(S1 x), S2 x)`.
pub fn loss_n2n(net: &DenoiserNet, x: &Tensor, masks: &[SubsamplerPair]) -> Result<LossEval> {
    eval_single(net, x, masks, |t| t.n2n)
}

/// `mse(f(S1 x) - S2 x, S1 f(x) - S2 f(x))`.
pub fn loss_residual(net: &DenoiserNet, x: &Tensor, masks: &[SubsamplerPair]) -> Result<LossEval> {
    eval_single(net, x, masks, |t| t.residual)
}

/// Per-bin scale used to bring every bin to a comparable range before the
/// network: the 99th percentile, or 1 when that is not positive.
pub fn percentile_scales(stack: &SpectralImageStack) -> Vec<f64> {
    stack
        .bins
        .iter()
        .map(|b| {
            if b.is_empty() {
                return 1.0;
            }
            let mut v = b.clone();
            let k = ((v.len() - 1) as f64 * 0.99).round() as usize;
            let (_, p, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
            if *p > 0.0 && p.is_finite() {
                *p
            } else {
                1.0
            }
        })
        .collect()
}

fn scaled(stack: &SpectralImageStack, scales: &[f64], inverse: bool) -> SpectralImageStack {
    let bins = stack
        .bins
        .iter()
        .zip(scales)
        .map(|(b, &s)| b.iter().map(|v| if inverse { v * s } else { v / s }).collect())
        .collect();
    SpectralImageStack { size: stack.size, bins }
}

/// Network, optimizer state and sampling RNG, kept alive across calls so
/// training can be warm-started. Epochs are counted globally.
pub struct Trainer {
    pub net: DenoiserNet,
    pub config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(net: DenoiserNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&net.params, config.schedule);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer { net, config, adam, rng, epoch: 0 })
    }

    /// Fresh network from `config.net` and a trainer around it.
    pub fn from_config(config: TrainConfig) -> Result<Self> {
        let net = DenoiserNet::new(config.net)?;
        Self::new(net, config)
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Train on `stack` for `epochs` epochs. `reference` is the normalized
    /// full-spectrum image of the same stack.
    pub fn run_epochs(&mut self, stack: &SpectralImageStack, reference: &[f64], epochs: usize) -> Result<Vec<LossReport>> {
        if !stack.all_finite() {
            return Err(Error::Numeric("training input contains non-finite values".into()));
        }
        let n = stack.size;
        if reference.len() != n * n {
            return Err(Error::shape("train", format!("reference of {} values for a {n}x{n} stack", reference.len())));
        }
        let patch = self.config.patch_size.map_or(n, |p| p.min(n));
        let half = patch / 2;
        if patch % 2 != 0 || (!self.net.bypass && half % 4 != 0) {
            return Err(Error::shape("train", format!("training images of {patch} pixels: half size must be a multiple of 4")));
        }
        let scales = percentile_scales(stack);
        let normed = scaled(stack, &scales, false);
        let ref_stack = SpectralImageStack { size: n, bins: vec![reference.to_vec()] };
        let mut reports = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            let e = self.epoch;
            self.adam.set_epoch(e);
            let lambda_r = self.config.lambda_r(e);
            let lambda_s = self.config.lambda_s;
            let mut acc = [0.0; 4];
            for _ in 0..self.config.steps_per_epoch {
                let (r0, c0) = if patch < n {
                    (self.rng.random_range(0..=n - patch), self.rng.random_range(0..=n - patch))
                } else {
                    (0, 0)
                };
                let x = normed.crop(r0, c0, patch)?;
                let rc = prior::minmax_normalize(&ref_stack.crop(r0, c0, patch)?.bins[0]);
                let masks = (0..x.num_bins())
                    .map(|_| SubsamplerPair::random(patch, patch, &mut self.rng))
                    .collect::<Result<Vec<_>>>()?;
                let mut g = Graph::new();
                let params = self.net.params.bind(&mut g);
                let xv = g.constant(x.to_tensor());
                let rv = g.constant(Tensor::new(vec![1, 1, patch, patch], rc)?);
                let t = record_losses(&mut g, &self.net, &params, xv, &masks, rv, lambda_s, lambda_r, &self.config.ssim)?;
                let vals = [t.n2n, t.residual, t.ssim, t.total].map(|v| g.value(v).item().expect("scalar loss"));
                for (name, v) in ["n2n", "residual", "ssim", "total"].iter().zip(vals) {
                    if !v.is_finite() {
                        return Err(Error::Numeric(format!("epoch {e}: {name} loss is {v}")));
                    }
                }
                for (a, v) in acc.iter_mut().zip(vals) {
                    *a += v;
                }
                if !self.net.bypass {
                    let grads = g.backward(t.total)?.collect(&params)?;
                    self.adam.step(&mut self.net.params, &grads)?;
                }
            }
            let k = self.config.steps_per_epoch as f64;
            reports.push(LossReport {
                epoch: e,
                n2n: acc[0] / k,
                residual: acc[1] / k,
                ssim: acc[2] / k,
                total: acc[3] / k,
                lambda_r,
                lambda_s,
                lr: self.adam.lr,
            });
            self.epoch += 1;
        }
        Ok(reports)
    }

    /// `s * f(x / s)` per bin with the percentile scales of `stack`.
    pub fn denoise(&self, stack: &SpectralImageStack) -> Result<SpectralImageStack> {
        let scales = percentile_scales(stack);
        let y = self.net.apply(&scaled(stack, &scales, false).to_tensor())?;
        let out = scaled(&SpectralImageStack::from_tensor(&y)?, &scales, true);
        if !out.all_finite() {
            return Err(Error::Numeric("denoiser output contains non-finite values".into()));
        }
        Ok(out)
    }
}

/// Train `net` in place for `config.epochs` epochs.
pub fn train(net: &mut DenoiserNet, stack: &SpectralImageStack, reference: &[f64], config: &TrainConfig) -> Result<Vec<LossReport>> {
    let mut t = Trainer::new(net.clone(), config.clone())?;
    let reports = t.run_epochs(stack, reference, config.epochs)?;
    *net = t.net;
    Ok(reports)
}
