//! Raw numeric kernels behind the differentiable ops. Everything here works
//! on plain slices; shape checks happen in the tape.

use std::cell::RefCell;

use super::tensor::{Shape, Tensor};

thread_local! {
    /// Reusable patch buffers; every user overwrites what it reads.
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Runs `f` with two scratch slices of the requested lengths.
fn with_scratch<R>(a: usize, b: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut bufs = cell.borrow_mut();
        let (x, y) = &mut *bufs;
        if x.len() < a {
            x.resize(a, 0.0);
        }
        if y.len() < b {
            y.resize(b, 0.0);
        }
        f(&mut x[..a], &mut y[..b])
    })
}

/// `c = beta·c + a·b` for row-major `a: m×k`, `b: k×n`, `c: m×n`, with
/// optional transposition of the operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides describe exactly the m×k, k×n and m×n row-major
    // buffers checked above, and `c` does not alias `a` or `b`.
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

/// Unfolds one `c×h×w` image into `(c·k·k) × (h·w)` patches with zero
/// padding `pad`, stride 1, same output size.
pub(crate) fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi, shift) = valid_span(w, kx, pad);
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || lo >= hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    out[lo..hi].copy_from_slice(&src[(lo as isize + shift) as usize..(hi as isize + shift) as usize]);
                }
            }
        }
    }
}

/// Output columns `lo..hi` whose source column `x + shift` lies inside a
/// row of width `w`, for kernel column `kx`.
fn valid_span(w: usize, kx: usize, pad: usize) -> (usize, usize, isize) {
    let shift = kx as isize - pad as isize;
    let lo = (-shift).clamp(0, w as isize) as usize;
    let hi = (w as isize - shift).clamp(0, w as isize) as usize;
    (lo, hi.max(lo), shift)
}

/// Adjoint of [`im2col`]: accumulates patch gradients back into the image.
pub(crate) fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi, shift) = valid_span(w, kx, pad);
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize || lo >= hi {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut dst[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (d, g) in dst.iter_mut().zip(&row[y * w + lo..y * w + hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// Same-padded stride-1 cross-correlation. `weight` is `cout×cin×k×k`,
/// `bias` (if any) has `cout` values.
pub(crate) fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Tensor {
    let xs = x.shape();
    let ws = weight.shape();
    let (cout, cin, k) = (ws.n, ws.c, ws.h);
    let pad = k / 2;
    let hw = xs.plane();
    let out_shape = Shape::new(xs.n, cout, xs.h, xs.w);
    let mut out = Tensor::zeros(out_shape);
    let cols_len = if k == 1 { 0 } else { cin * k * k * hw };
    with_scratch(cols_len, 0, |cols, _| {
        for n in 0..xs.n {
            let dst = &mut out.data_mut()[n * cout * hw..(n + 1) * cout * hw];
            if let Some(b) = bias {
                for (co, plane) in dst.chunks_mut(hw).enumerate() {
                    plane.fill(b.data()[co]);
                }
            }
            let src = x.item_slice(n);
            let patches: &[f64] = if k == 1 {
                src
            } else {
                im2col(src, cin, xs.h, xs.w, k, pad, cols);
                cols
            };
            gemm(cout, cin * k * k, hw, weight.data(), false, patches, false, 1.0, dst);
        }
    });
    out
}

/// Accumulates the input, weight and bias gradients of [`conv2d_forward`]
/// given the output gradient `dy`.
pub(crate) fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    dy: &Tensor,
    mut dx: Option<&mut Tensor>,
    mut dw: Option<&mut Tensor>,
    db: Option<&mut Tensor>,
) {
    let xs = x.shape();
    let ws = weight.shape();
    let (cout, cin, k) = (ws.n, ws.c, ws.h);
    let pad = k / 2;
    let hw = xs.plane();
    let kk = cin * k * k;
    if let Some(db) = db {
        let acc = db.data_mut();
        for n in 0..xs.n {
            for (co, plane) in dy.item_slice(n).chunks(hw).enumerate() {
                acc[co] += plane.iter().sum::<f64>();
            }
        }
    }
    let scratch = if k == 1 { 0 } else { kk * hw };
    with_scratch(scratch, scratch, |cols, dcols| {
        for n in 0..xs.n {
            let g = dy.item_slice(n);
            if let Some(dw) = dw.as_deref_mut() {
                let src = x.item_slice(n);
                let patches: &[f64] = if k == 1 {
                    src
                } else {
                    im2col(src, cin, xs.h, xs.w, k, pad, cols);
                    cols
                };
                // dW (cout×kk) += dY (cout×hw) · patchesᵀ (hw×kk)
                gemm(cout, hw, kk, g, false, patches, true, 1.0, dw.data_mut());
            }
            if let Some(dx) = dx.as_deref_mut() {
                let len = cin * hw;
                let dst = &mut dx.data_mut()[n * len..(n + 1) * len];
                if k == 1 {
                    gemm(cin, cout, hw, weight.data(), true, g, false, 1.0, dst);
                } else {
                    gemm(kk, cout, hw, weight.data(), true, g, false, 0.0, dcols);
                    col2im(dcols, cin, xs.h, xs.w, k, pad, dst);
                }
            }
        }
    });
}

/// 2×2 stride-2 max pooling; returns the output and, per output element,
/// the flat input index of the first maximal element in row-major order.
pub(crate) fn max_pool2_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let s = x.shape();
    let (oh, ow) = (s.h / 2, s.w / 2);
    let out_shape = Shape::new(s.n, s.c, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let mut arg = Vec::with_capacity(out_shape.numel());
    let xd = x.data();
    let od = out.data_mut();
    let mut o = 0;
    for nc in 0..s.n * s.c {
        let base = nc * s.h * s.w;
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = base + 2 * y * s.w + 2 * xx;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * s.w + 2 * xx + dx;
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                od[o] = xd[best];
                arg.push(best);
                o += 1;
            }
        }
    }
    (out, arg)
}

/// Per-axis taps of align-corners-false bilinear 2× upsampling.
pub(crate) fn upsample_taps(len: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            let l = src - i0 as f64;
            (i0, i1, 1.0 - l, l)
        })
        .collect()
}

pub(crate) fn upsample2_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let ty = upsample_taps(s.h);
    let tx = upsample_taps(s.w);
    let out_shape = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let mut out = Tensor::zeros(out_shape);
    let (oh, ow) = (2 * s.h, 2 * s.w);
    let xd = x.data();
    let od = out.data_mut();
    for nc in 0..s.n * s.c {
        let src = &xd[nc * s.h * s.w..(nc + 1) * s.h * s.w];
        let dst = &mut od[nc * oh * ow..(nc + 1) * oh * ow];
        for (y, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (xx, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                dst[y * ow + xx] = wy0 * (wx0 * src[y0 * s.w + x0] + wx1 * src[y0 * s.w + x1])
                    + wy1 * (wx0 * src[y1 * s.w + x0] + wx1 * src[y1 * s.w + x1]);
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(in_shape: Shape, dy: &Tensor, dx: &mut Tensor) {
    let ty = upsample_taps(in_shape.h);
    let tx = upsample_taps(in_shape.w);
    let (h, w) = (in_shape.h, in_shape.w);
    let (oh, ow) = (2 * h, 2 * w);
    let gd = dy.data();
    let dd = dx.data_mut();
    for nc in 0..in_shape.n * in_shape.c {
        let g = &gd[nc * oh * ow..(nc + 1) * oh * ow];
        let dst = &mut dd[nc * h * w..(nc + 1) * h * w];
        for (y, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (xx, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let v = g[y * ow + xx];
                dst[y0 * w + x0] += wy0 * wx0 * v;
                dst[y0 * w + x1] += wy0 * wx1 * v;
                dst[y1 * w + x0] += wy1 * wx0 * v;
                dst[y1 * w + x1] += wy1 * wx1 * v;
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}
