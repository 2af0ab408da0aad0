use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamSet, Tensor, Var};

/// Channel widths of the two encoder levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub widths: [usize; 2],
    /// Set from the run's master seed.
    #[serde(skip)]
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { widths: [32, 64], init_seed: 0 }
    }
}

/// Two-level residual U-net, one image per batch item:
///
/// ```text
/// e0 = relu(conv3(x))               w0 channels, full size
/// e1 = relu(conv3(pool(e0)))        w1, half
/// b  = relu(conv3(pool(e1)))        w1, quarter
/// d1 = relu(conv3([up(b), e1]))     w1, half
/// d0 = relu(conv3([up(d1), e0]))    w0, full
/// y  = x + conv1(d0)
/// ```
///
/// The output convolution starts at zero, so a fresh network is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub params: ParamSet,
    pub config: NetConfig,
    /// Skip every layer and return the input unchanged.
    pub bypass: bool,
}

const LAYERS: [&str; 6] = ["enc0", "enc1", "bottleneck", "dec1", "dec0", "out"];

impl DenoiserNet {
    pub fn new(config: NetConfig) -> Result<Self> {
        let [w0, w1] = config.widths;
        if w0 == 0 || w1 == 0 {
            return Err(Error::config("net.widths", "channel widths must be positive"));
        }
        let shapes = [(w0, 1, 3), (w1, w0, 3), (w1, w1, 3), (w1, 2 * w1, 3), (w0, w1 + w0, 3), (1, w0, 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamSet::new();
        for (name, &(cout, cin, k)) in LAYERS.iter().zip(&shapes) {
            let n = cout * cin * k * k;
            let weights = if *name == "out" {
                vec![0.0; n]
            } else {
                let he = Normal::new(0.0, (2.0 / (cin * k * k) as f64).sqrt()).expect("positive std");
                (0..n).map(|_| he.sample(&mut rng)).collect()
            };
            params.insert(format!("{name}.weight"), Tensor::new(vec![cout, cin, k, k], weights)?)?;
            params.insert(format!("{name}.bias"), Tensor::zeros(&[cout]))?;
        }
        Ok(DenoiserNet { params, config, bypass: false })
    }

    pub fn identity() -> Self {
        let mut net = DenoiserNet::new(NetConfig { widths: [1, 1], init_seed: 0 }).expect("valid widths");
        net.bypass = true;
        net
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_values()
    }

    /// Spatial sizes must survive two 2x poolings.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != 1 {
            return Err(Error::shape("denoiser", format!("expected (n, 1, h, w), got {shape:?}")));
        }
        if !self.bypass && (shape[2] % 4 != 0 || shape[3] % 4 != 0 || shape[2] == 0 || shape[3] == 0) {
            return Err(Error::shape("denoiser", format!("height and width must be positive multiples of 4, got {}x{}", shape[2], shape[3])));
        }
        Ok(())
    }

    /// Record the forward pass of `x` on `g`. `params` are the bound parameter
    /// nodes in `ParamSet` order (from [`ParamSet::bind`] or [`Self::bind_constant`]).
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        self.check_input(g.value(x).shape())?;
        if self.bypass {
            return Ok(x);
        }
        if params.len() != 2 * LAYERS.len() {
            return Err(Error::InvalidArgument(format!("{} parameter nodes for {} layers", params.len(), LAYERS.len())));
        }
        let conv = |g: &mut Graph, i: usize, input: Var, pad: usize| g.conv2d(input, params[2 * i], params[2 * i + 1], pad);
        let e0 = conv(g, 0, x, 1)?;
        let e0 = g.relu(e0);
        let p0 = g.maxpool2(e0)?;
        let e1 = conv(g, 1, p0, 1)?;
        let e1 = g.relu(e1);
        let p1 = g.maxpool2(e1)?;
        let b = conv(g, 2, p1, 1)?;
        let b = g.relu(b);
        let u1 = g.upsample2(b)?;
        let c1 = g.concat_channels(u1, e1)?;
        let d1 = conv(g, 3, c1, 1)?;
        let d1 = g.relu(d1);
        let u0 = g.upsample2(d1)?;
        let c0 = g.concat_channels(u0, e0)?;
        let d0 = conv(g, 4, c0, 1)?;
        let d0 = g.relu(d0);
        let r = conv(g, 5, d0, 0)?;
        g.add(x, r)
    }

    pub fn bind_constant(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|(_, t)| g.constant(t.clone())).collect()
    }

    /// Inference on an `(n, 1, h, w)` tensor.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind_constant(&mut g);
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, &p, xv)?;
        Ok(g.value(y).clone())
    }
}
