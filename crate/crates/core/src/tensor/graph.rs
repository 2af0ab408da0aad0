use super::conv::{self, ConvDims};
use super::Tensor;
use crate::error::{Error, Result};
use crate::prior::{self, SsimCache, SsimParams};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, dims: ConvDims },
    Relu(Var),
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2(Var),
    Concat { a: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Affine { x: Var, scale: f64 },
    Gather { x: Var, index: Vec<usize> },
    Mse(Var, Var),
    Sum(Var),
    WeightedSum(Vec<(Var, f64)>),
    BatchMean(Var),
    /// Per item: scale `1/(max-min)` and the flat indices of the extrema.
    MinMax { x: Var, items: Vec<(f64, usize, usize)> },
    Ssim { a: Var, b: Var, broadcast_b: bool, caches: Vec<SsimCache> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Tape of one forward pass. Nodes are appended in evaluation order, so the
/// reverse of insertion order is a valid topological order for `backward`.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for `vars` in order; a var that received no gradient yields
    /// an error.
    pub fn collect(&self, vars: &[Var]) -> Result<Vec<Tensor>> {
        vars.iter()
            .map(|&v| {
                self.get(v).cloned().ok_or_else(|| Error::InvalidArgument(format!("no gradient for node {}", v.0)))
            })
            .collect()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize) -> Result<Var> {
        let (n, cin, h, w) = self.value(input).dims4()?;
        let (cout, kin, kh, kw) = self.value(kernel).dims4()?;
        if kin != cin {
            return Err(Error::shape(
                "conv2d",
                format!("input has {cin} channels but kernel expects {kin}"),
            ));
        }
        if kh != kw {
            return Err(Error::shape("conv2d", format!("kernel must be square, got {kh}x{kw}")));
        }
        if self.value(bias).len() != cout {
            return Err(Error::shape("conv2d", format!("bias has {} values for {cout} outputs", self.value(bias).len())));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape("conv2d", "kernel larger than padded input"));
        }
        let dims = ConvDims { n, cin, h, w, cout, k: kh, pad: padding };
        let out = conv::forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &dims,
        );
        let value = Tensor::new(vec![n, cout, dims.out_h(), dims.out_w()], out)?;
        let ng = self.needs(input) || self.needs(kernel) || self.needs(bias);
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, dims }, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let ng = self.needs(x);
        self.push(value, Op::Relu(x), ng)
    }

    /// 2x2 non-overlapping max pooling. Ties route the gradient to the first
    /// maximal element in row-major order.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape("maxpool2", format!("spatial extent {h}x{w} is not even")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let cand = [
                        base + 2 * oy * w + 2 * ox,
                        base + 2 * oy * w + 2 * ox + 1,
                        base + (2 * oy + 1) * w + 2 * ox,
                        base + (2 * oy + 1) * w + 2 * ox + 1,
                    ];
                    let mut best = cand[0];
                    for &i in &cand[1..] {
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::MaxPool2 { x, argmax }, ng))
    }

    /// Nearest-neighbour 2x enlargement.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let src = self.value(x).data();
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    out[plane * oh * ow + oy * ow + ox] = src[plane * h * w + (oy / 2) * w + ox / 2];
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::Upsample2(x), ng))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, ca, ha, wa) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if (na, ha, wa) != (nb, hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                format!("batch/spatial extents differ: {:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let plane = ha * wa;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(na * (ca + cb) * plane);
        for i in 0..na {
            out.extend_from_slice(&da[i * ca * plane..(i + 1) * ca * plane]);
            out.extend_from_slice(&db[i * cb * plane..(i + 1) * cb * plane]);
        }
        let value = Tensor::new(vec![na, ca + cb, ha, wa], out)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Concat { a, b }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        let ng = self.needs(x);
        self.push(value, Op::Affine { x, scale }, ng)
    }

    /// `out[i] = x[index[i]]` reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape("gather", format!("index {bad} out of {}", src.len())));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(shape, data)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::Gather { x, index }, ng))
    }

    /// Mean of squared differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mse", self.value(a), self.value(b))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let s: f64 = da.iter().zip(db).map(|(x, y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / da.len() as f64);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mse(a, b), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// `sum_k w_k * s_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            total += w * self.value(v).item().ok_or_else(|| Error::shape("weighted_sum", "term is not a scalar"))?;
        }
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), ng))
    }

    /// Mean over the batch axis, giving a batch of one.
    pub fn batch_mean(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let len = c * h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; len];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(&src[i * len..(i + 1) * len]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        let value = Tensor::new(vec![1, c, h, w], out)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::BatchMean(x), ng))
    }

    /// Per-batch-item min-max normalization to [0, 1]; a constant item maps
    /// to zeros. The backward pass routes gradient through the first minimum
    /// and maximum pixels as well.
    pub fn minmax_normalize(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let len = c * h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; n * len];
        let mut items = Vec::with_capacity(n);
        for i in 0..n {
            let item = &src[i * len..(i + 1) * len];
            let (mut lo, mut hi) = (0, 0);
            for (j, v) in item.iter().enumerate() {
                if *v < item[lo] {
                    lo = j;
                }
                if *v > item[hi] {
                    hi = j;
                }
            }
            let (vlo, vhi) = (item[lo], item[hi]);
            let scale = if vhi > vlo { 1.0 / (vhi - vlo) } else { 0.0 };
            for (o, v) in out[i * len..(i + 1) * len].iter_mut().zip(item) {
                *o = (v - vlo) * scale;
            }
            items.push((scale, i * len + lo, i * len + hi));
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::MinMax { x, items }, ng))
    }

    /// Mean windowed SSIM between the items of `a` (n,1,h,w) and `b`, where
    /// `b` has either the same batch size or a batch of one shared by all items.
    pub fn ssim_mean(&mut self, a: Var, b: Var, params: &SsimParams) -> Result<Var> {
        let (na, ca, h, w) = self.value(a).dims4()?;
        let (nb, cb, hb, wb) = self.value(b).dims4()?;
        if ca != 1 || cb != 1 || (h, w) != (hb, wb) || !(nb == na || nb == 1) {
            return Err(Error::shape(
                "ssim",
                format!("incompatible shapes {:?} and {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let broadcast_b = nb == 1 && na != 1;
        let plane = h * w;
        let mut caches = Vec::with_capacity(na);
        let mut total = 0.0;
        for i in 0..na {
            let ai = &self.value(a).data()[i * plane..(i + 1) * plane];
            let j = if broadcast_b { 0 } else { i };
            let bi = &self.value(b).data()[j * plane..(j + 1) * plane];
            let (s, cache) = prior::ssim_forward(ai, bi, h, w, params)?;
            total += s;
            caches.push(cache);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(total / na as f64), Op::Ssim { a, b, broadcast_b, caches }, ng))
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn zeros_like(&self, v: Var) -> Tensor {
        Tensor::zeros(self.value(v).shape())
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, dims } => {
                let mut gi = self.needs(*input).then(|| self.zeros_like(*input));
                let mut gk = self.needs(*kernel).then(|| self.zeros_like(*kernel));
                let mut gb = self.needs(*bias).then(|| self.zeros_like(*bias));
                conv::backward(
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g.data(),
                    dims,
                    gi.as_mut().map(|t| t.data_mut()),
                    gk.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                if let Some(t) = gi {
                    self.accumulate(grads, *input, t);
                }
                if let Some(t) = gk {
                    self.accumulate(grads, *kernel, t);
                }
                if let Some(t) = gb {
                    self.accumulate(grads, *bias, t);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let data = g.data().iter().zip(xv).map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 }).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = self.zeros_like(*x);
                for (gv, &i) in g.data().iter().zip(argmax) {
                    gx.data_mut()[i] += gv;
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Upsample2(x) => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let (oh, ow) = (2 * h, 2 * w);
                let mut gx = self.zeros_like(*x);
                let gd = g.data();
                let gxd = gx.data_mut();
                for plane in 0..n * c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            gxd[plane * h * w + (oy / 2) * w + ox / 2] += gd[plane * oh * ow + oy * ow + ox];
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4()?;
                let cb = self.value(*b).dims4()?.1;
                let plane = h * w;
                let mut ga = Vec::with_capacity(n * ca * plane);
                let mut gb = Vec::with_capacity(n * cb * plane);
                for i in 0..n {
                    let base = i * (ca + cb) * plane;
                    ga.extend_from_slice(&g.data()[base..base + ca * plane]);
                    gb.extend_from_slice(&g.data()[base + ca * plane..base + (ca + cb) * plane]);
                }
                self.accumulate(grads, *a, Tensor::new(vec![n, ca, h, w], ga)?);
                self.accumulate(grads, *b, Tensor::new(vec![n, cb, h, w], gb)?);
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Affine { x, scale } => {
                let s = *scale;
                self.accumulate(grads, *x, g.map(|v| s * v));
            }
            Op::Gather { x, index } => {
                let mut gx = self.zeros_like(*x);
                for (gv, &i) in g.data().iter().zip(index) {
                    gx.data_mut()[i] += gv;
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Mse(a, b) => {
                let gs = g.data()[0];
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let k = 2.0 * gs / da.len() as f64;
                let diff: Vec<f64> = da.iter().zip(db).map(|(x, y)| k * (x - y)).collect();
                let shape = self.value(*a).shape().to_vec();
                if self.needs(*b) {
                    self.accumulate(grads, *b, Tensor::new(shape.clone(), diff.iter().map(|v| -v).collect())?);
                }
                self.accumulate(grads, *a, Tensor::new(shape, diff)?);
            }
            Op::Sum(x) => {
                let gs = g.data()[0];
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), gs));
            }
            Op::WeightedSum(terms) => {
                let gs = g.data()[0];
                for &(v, w) in terms {
                    self.accumulate(grads, v, Tensor::scalar(w * gs));
                }
            }
            Op::BatchMean(x) => {
                let n = self.value(*x).dims4()?.0;
                let mut data = Vec::with_capacity(n * g.len());
                for _ in 0..n {
                    data.extend(g.data().iter().map(|v| v / n as f64));
                }
                self.accumulate(grads, *x, Tensor::new(self.value(*x).shape().to_vec(), data)?);
            }
            Op::MinMax { x, items } => {
                // y = (x - lo) s: dy/dlo = -s (1 - y), dy/dhi = -s y.
                let len = g.len() / items.len();
                let y = out.data();
                let mut data: Vec<f64> = Vec::with_capacity(g.len());
                for (i, &(s, lo, hi)) in items.iter().enumerate() {
                    let gi = &g.data()[i * len..(i + 1) * len];
                    data.extend(gi.iter().map(|v| v * s));
                    if s > 0.0 {
                        let yi = &y[i * len..(i + 1) * len];
                        let (mut dlo, mut dhi) = (0.0, 0.0);
                        for (gv, yv) in gi.iter().zip(yi) {
                            dlo -= gv * (1.0 - yv);
                            dhi -= gv * yv;
                        }
                        data[lo] += s * dlo;
                        data[hi] += s * dhi;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), data)?);
            }
            Op::Ssim { a, b, broadcast_b, caches } => {
                let gs = g.data()[0] / caches.len() as f64;
                let mut ga = self.zeros_like(*a);
                let mut gb = self.zeros_like(*b);
                let (_, _, h, w) = self.value(*a).dims4()?;
                let plane = h * w;
                for (i, cache) in caches.iter().enumerate() {
                    let j = if *broadcast_b { 0 } else { i };
                    let ai = &self.value(*a).data()[i * plane..(i + 1) * plane];
                    let bi = &self.value(*b).data()[j * plane..(j + 1) * plane];
                    let (da, db) = prior::ssim_backward(cache, ai, bi, h, w);
                    for (o, v) in ga.data_mut()[i * plane..(i + 1) * plane].iter_mut().zip(&da) {
                        *o += gs * v;
                    }
                    for (o, v) in gb.data_mut()[j * plane..(j + 1) * plane].iter_mut().zip(&db) {
                        *o += gs * v;
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
        }
        Ok(())
    }
}
