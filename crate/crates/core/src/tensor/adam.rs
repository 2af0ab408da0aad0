use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors in a fixed insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Register every parameter as a trainable leaf, in order.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.entries.iter().map(|(_, t)| g.param(t.clone())).collect()
    }

    /// Replace values in place; shapes must match.
    pub fn assign(&mut self, name: &str, t: Tensor) -> Result<()> {
        let slot = self.get_mut(name).ok_or_else(|| Error::InvalidArgument(format!("unknown parameter `{name}`")))?;
        if slot.shape() != t.shape() {
            return Err(Error::shape("ParamSet::assign", format!("{name}: {:?} vs {:?}", slot.shape(), t.shape())));
        }
        *slot = t;
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Step decay: `base * factor^(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base: f64,
    pub factor: f64,
    pub every_epochs: usize,
}

impl LrSchedule {
    pub fn at_epoch(&self, epoch: usize) -> f64 {
        let steps = if self.every_epochs == 0 { 0 } else { epoch / self.every_epochs };
        self.base * self.factor.powi(steps as i32)
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { base: 1e-4, factor: 0.9, every_epochs: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub schedule: LrSchedule,
    pub lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, schedule: LrSchedule) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState { config: AdamConfig::default(), schedule, lr: schedule.base, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.schedule.at_epoch(epoch);
    }

    /// One bias-corrected Adam update. `grads` must hold one tensor per
    /// parameter, in `ParamSet` order.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "adam step: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for ((_, p), g) in params.entries.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_step", format!("{:?} vs {:?}", p.shape(), g.shape())));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, ((_, p), g)) in params.entries.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Single Adam update where some gradients may be absent (`None`), which is
/// rejected.
pub fn adam_step(params: &mut ParamSet, grads: &[Option<Tensor>], state: &mut AdamState) -> Result<()> {
    let grads: Vec<Tensor> = grads
        .iter()
        .enumerate()
        .map(|(i, g)| g.clone().ok_or_else(|| Error::InvalidArgument(format!("missing gradient for parameter {i}"))))
        .collect::<Result<_>>()?;
    state.step(params, &grads)
}
