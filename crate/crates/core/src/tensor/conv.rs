//! im2col convolution kernels backed by `matrixmultiply::dgemm`.

/// Row-major `c = alpha * a(m,k) * b(k,n) + beta * c`, with optional transposes
/// expressed through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slices are sized by the callers to hold the requested extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.k
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.k
    }
}

/// Unfold one image `(cin, h, w)` into `(cin*k*k, oh*ow)` columns.
fn im2col(img: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    for c in 0..d.cin {
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (c * d.k + ky) * d.k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - d.pad as isize;
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= d.h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src = &img[(c * d.h + iy as usize) * d.w..(c * d.h + iy as usize + 1) * d.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - d.pad as isize;
                        *v = if ix < 0 || ix >= d.w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image.
fn col2im(cols: &[f64], d: &ConvDims, img: &mut [f64]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    for c in 0..d.cin {
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = (c * d.k + ky) * d.k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let iy = oy as isize + ky as isize - d.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let base = (c * d.h + iy as usize) * d.w;
                    for ox in 0..ow {
                        let ix = ox as isize + kx as isize - d.pad as isize;
                        if ix >= 0 && (ix as usize) < d.w {
                            img[base + ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(input: &[f64], kernel: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    let kk = d.cin * d.k * d.k;
    let in_len = d.cin * d.h * d.w;
    let out_len = d.cout * plane;
    let mut out = vec![0.0; d.n * out_len];
    let mut cols = vec![0.0; kk * plane];
    for b in 0..d.n {
        let o = &mut out[b * out_len..(b + 1) * out_len];
        for (co, chunk) in o.chunks_mut(plane).enumerate() {
            chunk.fill(bias[co]);
        }
        if d.k == 1 && d.pad == 0 {
            gemm(d.cout, kk, plane, kernel, false, &input[b * in_len..(b + 1) * in_len], false, o, 1.0);
        } else {
            im2col(&input[b * in_len..(b + 1) * in_len], d, &mut cols);
            gemm(d.cout, kk, plane, kernel, false, &cols, false, o, 1.0);
        }
    }
    out
}

/// Gradients with respect to input, kernel and bias. Any of the three may be
/// skipped by passing `None`.
pub(crate) fn backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    d: &ConvDims,
    mut grad_input: Option<&mut [f64]>,
    mut grad_kernel: Option<&mut [f64]>,
    mut grad_bias: Option<&mut [f64]>,
) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let plane = oh * ow;
    let kk = d.cin * d.k * d.k;
    let in_len = d.cin * d.h * d.w;
    let out_len = d.cout * plane;
    let direct = d.k == 1 && d.pad == 0;
    let mut cols = vec![0.0; if direct { 0 } else { kk * plane }];
    let mut dcols = vec![0.0; if direct { 0 } else { kk * plane }];
    for b in 0..d.n {
        let go = &grad_out[b * out_len..(b + 1) * out_len];
        if let Some(gb) = grad_bias.as_deref_mut() {
            for (co, chunk) in go.chunks(plane).enumerate() {
                gb[co] += chunk.iter().sum::<f64>();
            }
        }
        let x = &input[b * in_len..(b + 1) * in_len];
        if let Some(gk) = grad_kernel.as_deref_mut() {
            if direct {
                gemm(d.cout, plane, kk, go, false, x, true, gk, 1.0);
            } else {
                im2col(x, d, &mut cols);
                gemm(d.cout, plane, kk, go, false, &cols, true, gk, 1.0);
            }
        }
        if let Some(gi) = grad_input.as_deref_mut() {
            let gi = &mut gi[b * in_len..(b + 1) * in_len];
            if direct {
                gemm(kk, d.cout, plane, kernel, true, go, false, gi, 1.0);
            } else {
                gemm(kk, d.cout, plane, kernel, true, go, false, &mut dcols, 0.0);
                col2im(&dcols, d, gi);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(input: &[f64], kernel: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
        let (oh, ow) = (d.out_h(), d.out_w());
        let mut out = vec![0.0; d.n * d.cout * oh * ow];
        for b in 0..d.n {
            for co in 0..d.cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = bias[co];
                        for ci in 0..d.cin {
                            for ky in 0..d.k {
                                for kx in 0..d.k {
                                    let iy = oy as isize + ky as isize - d.pad as isize;
                                    let ix = ox as isize + kx as isize - d.pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < d.h && (ix as usize) < d.w {
                                        s += kernel[((co * d.cin + ci) * d.k + ky) * d.k + kx]
                                            * input[((b * d.cin + ci) * d.h + iy as usize) * d.w + ix as usize];
                                    }
                                }
                            }
                        }
                        out[((b * d.cout + co) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_forward_matches_direct_loops() {
        let d = ConvDims { n: 2, cin: 3, h: 5, w: 4, cout: 2, k: 3, pad: 1 };
        let input: Vec<f64> = (0..d.n * d.cin * d.h * d.w).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let kernel: Vec<f64> = (0..d.cout * d.cin * 9).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
        let bias = vec![0.5, -0.25];
        let fast = forward(&input, &kernel, &bias, &d);
        let slow = naive(&input, &kernel, &bias, &d);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let d = ConvDims { n: 1, cin: 2, h: 4, w: 6, cout: 1, k: 3, pad: 1 };
        let kk = d.cin * 9;
        let plane = d.out_h() * d.out_w();
        let x: Vec<f64> = (0..d.cin * d.h * d.w).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..kk * plane).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut cols = vec![0.0; kk * plane];
        im2col(&x, &d, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, &d, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
