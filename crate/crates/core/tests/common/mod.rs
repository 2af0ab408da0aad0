//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specrecon::denoiser::{DenoiserNet, NetConfig, SubsamplerPair};
use specrecon::geometry::{FanBeamGeometry, Projector};
use specrecon::phantom::{NoiseMode, SpectralSinogram};
use specrecon::tensor::{Graph, Tensor, Var};

/// 8x8 grid, 16 detectors, 12 views: small enough for dense linear algebra.
pub fn small_geometry() -> FanBeamGeometry {
    FanBeamGeometry::uniform(350.0, 210.0, 16, 0.6, 12, 8, 0.5).unwrap()
}

/// Length of the segment `s + t (e - s)`, `t` in [0, 1], inside the box, by
/// Liang-Barsky clipping.
pub fn clipped_length(s: [f64; 2], e: [f64; 2], x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let d = [e[0] - s[0], e[1] - s[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-d[0], s[0] - x0), (d[0], x1 - s[0]), (-d[1], s[1] - y0), (d[1], y1 - s[1])] {
        if p == 0.0 {
            if q < 0.0 {
                return 0.0;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    if t1 > t0 {
        (t1 - t0) * d[0].hypot(d[1])
    } else {
        0.0
    }
}

/// Dense system matrix built pixel by pixel from first principles: source on
/// a circle of radius SOD, flat detector at SDD from the source, row 0 at the
/// top of the grid.
pub fn dense_matrix(g: &FanBeamGeometry) -> Vec<Vec<f64>> {
    let n = g.image_size;
    let half = n as f64 * g.pixel_size / 2.0;
    let mut a = Vec::new();
    for &beta in &g.view_angles {
        let (sb, cb) = beta.sin_cos();
        let src = [g.source_to_isocenter * cb, g.source_to_isocenter * sb];
        let centre = [src[0] - g.source_to_detector * cb, src[1] - g.source_to_detector * sb];
        for k in 0..g.detector_count {
            let t = (k as f64 - (g.detector_count as f64 - 1.0) / 2.0) * g.detector_pitch;
            let end = [centre[0] - t * sb, centre[1] + t * cb];
            let mut row = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    let x0 = -half + c as f64 * g.pixel_size;
                    let y1 = half - r as f64 * g.pixel_size;
                    row[r * n + c] = clipped_length(src, end, x0, x0 + g.pixel_size, y1 - g.pixel_size, y1);
                }
            }
            a.push(row);
        }
    }
    a
}

/// The projector's own sparse matrix, densified.
pub fn dense(p: &Projector) -> DMatrix<f64> {
    let g = p.geometry();
    let mut a = DMatrix::zeros(g.num_rays(), g.num_pixels());
    for r in 0..g.num_rays() {
        for (c, w) in p.row(r) {
            a[(r, c)] += w;
        }
    }
    a
}

pub fn sinogram(bins: Vec<Vec<f64>>, p: &Projector) -> SpectralSinogram {
    let g = p.geometry();
    let n = bins.len();
    SpectralSinogram {
        views: g.num_views(),
        detectors: g.detector_count,
        bins,
        n0: vec![1e4; n],
        noise: NoiseMode::Off,
        seed: 0,
        clamped: vec![0; n],
    }
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}

/// Two nested ellipses on the 8x8 grid, piecewise constant like the phantoms.
/// A random image puts most of its energy on the near-null directions of the
/// 12-view system (smallest weighted singular value about 3e-3), which no
/// relaxation in (0, 2) resolves within 2000 sweeps.
pub fn nested_ellipses() -> Vec<f64> {
    (0..64)
        .map(|i| {
            let (r, c) = ((i / 8) as f64 - 3.5, (i % 8) as f64 - 3.5);
            if r * r / 9.0 + c * c / 6.0 >= 1.0 {
                0.0
            } else if (r - 1.0).abs() < 1.0 && c.abs() < 1.0 {
                0.05
            } else {
                0.02
            }
        })
        .collect()
}

/// SSIM by direct summation over every window position with an explicit 2-D
/// Gaussian kernel (11 taps, sigma 1.5), population moments.
pub fn ssim_direct(a: &[f64], b: &[f64], n: usize) -> f64 {
    let (win, sigma) = (11usize, 1.5f64);
    let half = (win as f64 - 1.0) / 2.0;
    let mut kernel = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            kernel[i * win + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let m = n - win + 1;
    let mut acc = 0.0;
    for r in 0..m {
        for c in 0..m {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kernel[i * win + j];
                    ma += k * a[(r + i) * n + c + j];
                    mb += k * b[(r + i) * n + c + j];
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let k = kernel[i * win + j];
                    let (da, db) = (a[(r + i) * n + c + j] - ma, b[(r + i) * n + c + j] - mb);
                    va += k * da * da;
                    vb += k * db * db;
                    cov += k * da * db;
                }
            }
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    acc / (m * m) as f64
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_RTOL: f64 = 1e-4;

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn compare(what: String, fd: f64, an: f64) -> Result<(), String> {
    let tol = FD_RTOL * fd.abs().max(an.abs()) + 1e-8;
    if (fd - an).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what}: fd {fd:.10e} vs analytic {an:.10e}"))
    }
}

/// Compare `backward` against central differences for every input entry.
pub fn fd_check(name: &str, inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) -> Result<(), String> {
    let eval = |xs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars);
        (g, vars, out)
    };
    let (g, vars, out) = eval(inputs);
    let grads = g.backward(out).map_err(|e| e.to_string())?;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
        for i in 0..t.len() {
            let bump = |d: f64| {
                let mut xs = inputs.to_vec();
                xs[k].data_mut()[i] += d;
                let (g, _, o) = eval(&xs);
                g.value(o).item().unwrap()
            };
            let fd = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
            compare(format!("{name}: input {k} entry {i}"), fd, analytic.data()[i])?;
        }
    }
    Ok(())
}

/// A network with a non-zero output layer so every parameter gets gradient.
pub fn perturbed_net(seed: u64) -> DenoiserNet {
    let mut net = DenoiserNet::new(NetConfig { widths: [3, 4], init_seed: seed }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for name in ["out.weight", "out.bias", "enc0.bias", "dec0.bias"] {
        let t = net.params.get(name).unwrap();
        let r = random_tensor(t.shape(), &mut rng).map(|v| 0.3 * v);
        net.params.assign(name, r).unwrap();
    }
    net
}

/// Central differences on a strided subset of every network parameter for a
/// loss returning `(value, gradients in parameter order)`.
pub fn net_fd_check(
    name: &str,
    seed: u64,
    f: impl Fn(&DenoiserNet, &Tensor, &[SubsamplerPair]) -> (f64, Vec<Tensor>),
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = perturbed_net(seed);
    let x = random_tensor(&[2, 1, 8, 8], &mut rng);
    let masks: Vec<SubsamplerPair> = (0..2).map(|_| SubsamplerPair::random(8, 8, &mut rng).unwrap()).collect();
    let (_, grads) = f(&net, &x, &masks);
    if grads.len() != net.params.len() {
        return Err(format!("{name}: {} gradients for {} parameters", grads.len(), net.params.len()));
    }
    let names: Vec<String> = net.params.iter().map(|(n, _)| n.to_string()).collect();
    for (k, pname) in names.iter().enumerate() {
        let len = net.params.get(pname).unwrap().len();
        for i in (0..len).step_by(1 + len / 12) {
            let bump = |d: f64| {
                let mut n2 = net.clone();
                let mut t = n2.params.get(pname).unwrap().clone();
                t.data_mut()[i] += d;
                n2.params.assign(pname, t).unwrap();
                f(&n2, &x, &masks).0
            };
            let fd = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
            compare(format!("{name}: {pname}[{i}]"), fd, grads[k].data()[i])?;
        }
    }
    Ok(())
}
