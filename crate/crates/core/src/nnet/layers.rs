//! Learnable per-layer state and the compute kernels behind forward and
//! backward passes.
//!
//! Determinism: every rayon loop here either writes disjoint output slices
//! (per-sample or per-output-channel) with sequential reduction inside, or is
//! not parallel at all. No float addition order depends on thread count.

use rayon::prelude::*;

use super::real::Real;
use super::tensor4::Tensor4;

pub const BN_EPS: f64 = 1e-5;
/// Running statistics keep this fraction of their previous value per batch.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<F> {
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
}

impl<F: Real> BatchNormState<F> {
    pub fn identity(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![F::one(); channels],
            beta: vec![F::zero(); channels],
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
        }
    }
}

/// Weights of one convolution: `weight` is [out_c][in_c][kh][kw] flat.
/// `bias` is present only when the layer has no batch norm; beta would make
/// a bias redundant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<F> {
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
    pub bn: Option<BatchNormState<F>>,
}

/// Weights of one fully connected layer: `weight` is [out][in] flat.
#[derive(Debug, Clone, PartialEq)]
pub struct FullParams<F> {
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
    pub bn: Option<BatchNormState<F>>,
}

/// Softmax classifier head reading the flattened top of the stack.
/// `weight` is [rows][cols] flat with one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<F> {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<F> {
    Conv(ConvParams<F>),
    Pool,
    Flatten,
    Full(FullParams<F>),
}

// ---------------------------------------------------------------------------
// Convolution

#[allow(clippy::too_many_arguments)]
pub(super) fn conv_forward<F: Real>(
    input: &Tensor4<F>,
    weight: &[F],
    bias: Option<&[F]>,
    out_c: usize,
    kernel: (usize, usize),
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Tensor4<F> {
    let mut out = Tensor4::zeros(input.n, out_c, out_h, out_w);
    let in_len = input.sample_len();
    let out_len = out.sample_len();
    let (in_c, h, w) = (input.c, input.h, input.w);
    out.data
        .par_chunks_mut(out_len)
        .zip(input.data.par_chunks(in_len))
        .for_each(|(o, inp)| {
            conv_sample(
                inp, o, weight, bias, in_c, h, w, out_c, kernel, stride, pad, out_h, out_w,
            );
        });
    out
}

/// Valid-kernel index window: returns `(lo, hi)` such that
/// `base + k` lands in `0..extent` exactly for `k` in `lo..hi`.
#[inline(always)]
fn kernel_window(base: isize, kernel: usize, extent: usize) -> (usize, usize) {
    let lo = (-base).max(0) as usize;
    let hi = (extent as isize - base).clamp(0, kernel as isize) as usize;
    (lo, hi.max(lo))
}

#[allow(clippy::too_many_arguments)]
fn conv_sample<F: Real>(
    inp: &[F],
    out: &mut [F],
    weight: &[F],
    bias: Option<&[F]>,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    (kh, kw): (usize, usize),
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let ksize = kh * kw;
    for oc in 0..out_c {
        let b = bias.map_or(F::zero(), |b| b[oc]);
        let w_oc = &weight[oc * in_c * ksize..][..in_c * ksize];
        for oy in 0..oh {
            let base_y = (oy * stride) as isize - pad as isize;
            let (ky_lo, ky_hi) = kernel_window(base_y, kh, h);
            for ox in 0..ow {
                let base_x = (ox * stride) as isize - pad as isize;
                let (kx_lo, kx_hi) = kernel_window(base_x, kw, w);
                let mut acc = b;
                for ic in 0..in_c {
                    let plane = &inp[ic * h * w..][..h * w];
                    let wk = &w_oc[ic * ksize..][..ksize];
                    for ky in ky_lo..ky_hi {
                        let iy = (base_y + ky as isize) as usize;
                        let row = &plane[iy * w..][..w];
                        let wrow = &wk[ky * kw..][..kw];
                        let ix0 = (base_x + kx_lo as isize) as usize;
                        let mut dot = F::zero();
                        for (wv, xv) in
                            wrow[kx_lo..kx_hi].iter().zip(&row[ix0..ix0 + (kx_hi - kx_lo)])
                        {
                            dot += *wv * *xv;
                        }
                        acc += dot;
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

/// Gradient with respect to the convolution input. Parallel over samples.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv_backward_input<F: Real>(
    dout: &Tensor4<F>,
    weight: &[F],
    in_shape: (usize, usize, usize),
    kernel: (usize, usize),
    stride: usize,
    pad: usize,
) -> Tensor4<F> {
    let (in_c, h, w) = in_shape;
    let (kh, kw) = kernel;
    let ksize = kh * kw;
    let (out_c, oh, ow) = (dout.c, dout.h, dout.w);
    let mut dinp = Tensor4::zeros(dout.n, in_c, h, w);
    let in_len = dinp.sample_len();
    let out_len = dout.sample_len();
    dinp.data
        .par_chunks_mut(in_len)
        .zip(dout.data.par_chunks(out_len))
        .for_each(|(di, go)| {
            for oc in 0..out_c {
                let w_oc = &weight[oc * in_c * ksize..][..in_c * ksize];
                for oy in 0..oh {
                    let base_y = (oy * stride) as isize - pad as isize;
                    let (ky_lo, ky_hi) = kernel_window(base_y, kh, h);
                    for ox in 0..ow {
                        let g = go[(oc * oh + oy) * ow + ox];
                        if g == F::zero() {
                            continue;
                        }
                        let base_x = (ox * stride) as isize - pad as isize;
                        let (kx_lo, kx_hi) = kernel_window(base_x, kw, w);
                        for ic in 0..in_c {
                            let wk = &w_oc[ic * ksize..][..ksize];
                            for ky in ky_lo..ky_hi {
                                let iy = (base_y + ky as isize) as usize;
                                let ix0 = (base_x + kx_lo as isize) as usize;
                                let drow = &mut di[(ic * h + iy) * w..][..w];
                                let wrow = &wk[ky * kw..][..kw];
                                for (k, dv) in
                                    drow[ix0..ix0 + (kx_hi - kx_lo)].iter_mut().enumerate()
                                {
                                    *dv += g * wrow[kx_lo + k];
                                }
                            }
                        }
                    }
                }
            }
        });
    dinp
}

/// Gradients with respect to weights and bias. Parallel over output
/// channels; the batch reduction inside each channel is sequential and in
/// sample order, so results do not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv_backward_params<F: Real>(
    input: &Tensor4<F>,
    dout: &Tensor4<F>,
    kernel: (usize, usize),
    stride: usize,
    pad: usize,
    has_bias: bool,
) -> (Vec<F>, Option<Vec<F>>) {
    let (in_c, h, w) = (input.c, input.h, input.w);
    let (kh, kw) = kernel;
    let ksize = kh * kw;
    let (out_c, oh, ow) = (dout.c, dout.h, dout.w);
    let mut dweight = vec![F::zero(); out_c * in_c * ksize];
    let mut dbias = vec![F::zero(); out_c];
    dweight
        .par_chunks_mut(in_c * ksize)
        .zip(dbias.par_iter_mut())
        .enumerate()
        .for_each(|(oc, (dw, db))| {
            for n in 0..input.n {
                let inp = input.sample(n);
                let go = dout.sample(n);
                for oy in 0..oh {
                    let base_y = (oy * stride) as isize - pad as isize;
                    let (ky_lo, ky_hi) = kernel_window(base_y, kh, h);
                    for ox in 0..ow {
                        let g = go[(oc * oh + oy) * ow + ox];
                        if g == F::zero() {
                            continue;
                        }
                        *db += g;
                        let base_x = (ox * stride) as isize - pad as isize;
                        let (kx_lo, kx_hi) = kernel_window(base_x, kw, w);
                        for ic in 0..in_c {
                            let plane = &inp[ic * h * w..][..h * w];
                            let dwk = &mut dw[ic * ksize..][..ksize];
                            for ky in ky_lo..ky_hi {
                                let iy = (base_y + ky as isize) as usize;
                                let ix0 = (base_x + kx_lo as isize) as usize;
                                let row = &plane[iy * w..][..w];
                                let dwrow = &mut dwk[ky * kw..][..kw];
                                for (k, dv) in
                                    dwrow[kx_lo..kx_hi].iter_mut().enumerate()
                                {
                                    *dv += g * row[ix0 + k];
                                }
                            }
                        }
                    }
                }
            }
        });
    (dweight, has_bias.then_some(dbias))
}

// ---------------------------------------------------------------------------
// Max pooling

/// Floor-mode max pool. Returns the pooled map and, per output element, the
/// flat (y*w + x) index of the winner inside its input channel plane. Ties go
/// to the first element in scan order.
pub(super) fn pool_forward<F: Real>(
    input: &Tensor4<F>,
    kernel: usize,
    stride: usize,
) -> (Tensor4<F>, Vec<u32>) {
    let (h, w) = (input.h, input.w);
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Tensor4::zeros(input.n, input.c, oh, ow);
    let mut argmax = vec![0u32; out.numel()];
    let out_len = out.sample_len();
    let in_len = input.sample_len();
    let channels = input.c;
    out.data
        .par_chunks_mut(out_len)
        .zip(argmax.par_chunks_mut(out_len))
        .zip(input.data.par_chunks(in_len))
        .for_each(|((o, am), inp)| {
            for c in 0..channels {
                let plane = &inp[c * h * w..][..h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = F::neg_infinity();
                        let mut besti = 0u32;
                        for ky in 0..kernel {
                            let iy = oy * stride + ky;
                            for kx in 0..kernel {
                                let ix = ox * stride + kx;
                                let v = plane[iy * w + ix];
                                if v > best {
                                    best = v;
                                    besti = (iy * w + ix) as u32;
                                }
                            }
                        }
                        let oi = (c * oh + oy) * ow + ox;
                        o[oi] = best;
                        am[oi] = besti;
                    }
                }
            }
        });
    (out, argmax)
}

pub(super) fn pool_backward<F: Real>(
    dout: &Tensor4<F>,
    argmax: &[u32],
    in_shape: (usize, usize, usize),
) -> Tensor4<F> {
    let (c, h, w) = in_shape;
    let mut dinp = Tensor4::zeros(dout.n, c, h, w);
    let out_len = dout.sample_len();
    let in_len = dinp.sample_len();
    let (oh, ow) = (dout.h, dout.w);
    dinp.data
        .par_chunks_mut(in_len)
        .zip(dout.data.par_chunks(out_len))
        .zip(argmax.par_chunks(out_len))
        .for_each(|((di, go), am)| {
            for ch in 0..c {
                let dplane = &mut di[ch * h * w..][..h * w];
                for oi in 0..oh * ow {
                    // overlapping windows can route several gradients to one
                    // input cell, hence accumulate
                    dplane[am[(ch * oh * ow) + oi] as usize] += go[ch * oh * ow + oi];
                }
            }
        });
    dinp
}

// ---------------------------------------------------------------------------
// Batch norm

/// Per-channel batch statistics, f64 accumulated for stability and
/// determinism. Variance is biased (divided by the count), matching what the
/// normalization itself uses.
pub(super) fn bn_batch_stats<F: Real>(x: &Tensor4<F>) -> (Vec<F>, Vec<F>, Vec<F>) {
    let m = (x.n * x.h * x.w) as f64;
    let plane = x.h * x.w;
    let mut mean = vec![F::zero(); x.c];
    let mut var = vec![F::zero(); x.c];
    let mut inv_std = vec![F::zero(); x.c];
    for c in 0..x.c {
        let mut sum = 0f64;
        for n in 0..x.n {
            let s = x.sample(n);
            for v in &s[c * plane..][..plane] {
                sum += v.f64();
            }
        }
        let mu = sum / m;
        let mut sq = 0f64;
        for n in 0..x.n {
            let s = x.sample(n);
            for v in &s[c * plane..][..plane] {
                let d = v.f64() - mu;
                sq += d * d;
            }
        }
        let va = sq / m;
        mean[c] = F::c(mu);
        var[c] = F::c(va);
        inv_std[c] = F::c(1.0 / (va + BN_EPS).sqrt());
    }
    (mean, var, inv_std)
}

/// In-place normalization with given per-channel statistics.
pub(super) fn bn_apply<F: Real>(
    x: &mut Tensor4<F>,
    mean: &[F],
    inv_std: &[F],
    gamma: &[F],
    beta: &[F],
) {
    let plane = x.h * x.w;
    let channels = x.c;
    let len = x.sample_len();
    x.data.par_chunks_mut(len).for_each(|s| {
        for c in 0..channels {
            let (mu, is, g, b) = (mean[c], inv_std[c], gamma[c], beta[c]);
            for v in &mut s[c * plane..][..plane] {
                *v = g * (*v - mu) * is + b;
            }
        }
    });
}

/// Gradients through batch normalization. `lin` is the pre-norm input that
/// the statistics were computed from. Returns (dgamma, dbeta) and transforms
/// `d` from the gradient at the norm output into the gradient at `lin`.
pub(super) fn bn_backward<F: Real>(
    d: &mut Tensor4<F>,
    lin: &Tensor4<F>,
    mean: &[F],
    inv_std: &[F],
    gamma: &[F],
) -> (Vec<F>, Vec<F>) {
    let m = (d.n * d.h * d.w) as f64;
    let plane = d.h * d.w;
    let mut dgamma = vec![F::zero(); d.c];
    let mut dbeta = vec![F::zero(); d.c];
    for c in 0..d.c {
        let (mu, is) = (mean[c].f64(), inv_std[c].f64());
        let mut s1 = 0f64; // sum of dy
        let mut s2 = 0f64; // sum of dy * xhat
        for n in 0..d.n {
            let dy = d.sample(n);
            let xv = lin.sample(n);
            for i in 0..plane {
                let dyv = dy[c * plane + i].f64();
                let xhat = (xv[c * plane + i].f64() - mu) * is;
                s1 += dyv;
                s2 += dyv * xhat;
            }
        }
        dgamma[c] = F::c(s2);
        dbeta[c] = F::c(s1);
        let a = F::c(s1 / m);
        let b = F::c(s2 / m);
        let scale = gamma[c] * inv_std[c];
        let (mu_f, is_f) = (mean[c], inv_std[c]);
        for n in 0..d.n {
            let base = n * d.sample_len() + c * plane;
            for i in 0..plane {
                let xhat = (lin.data[base + i] - mu_f) * is_f;
                let dy = d.data[base + i];
                d.data[base + i] = scale * (dy - a - xhat * b);
            }
        }
    }
    (dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Fully connected

pub(super) fn full_forward<F: Real>(
    input: &Tensor4<F>,
    weight: &[F],
    bias: Option<&[F]>,
    out_width: usize,
) -> Tensor4<F> {
    let in_width = input.sample_len();
    let mut out = Tensor4::zeros(input.n, out_width, 1, 1);
    out.data
        .par_chunks_mut(out_width)
        .zip(input.data.par_chunks(in_width))
        .for_each(|(o, x)| {
            for (ov, wrow) in o.iter_mut().zip(weight.chunks(in_width)) {
                let mut acc = F::zero();
                for (wv, xv) in wrow.iter().zip(x) {
                    acc += *wv * *xv;
                }
                *ov = acc;
            }
            if let Some(b) = bias {
                for (ov, bv) in o.iter_mut().zip(b) {
                    *ov += *bv;
                }
            }
        });
    out
}

/// Returns (dweight, dbias): parallel over output rows, batch reduction
/// sequential inside each row.
pub(super) fn full_backward_params<F: Real>(
    input: &Tensor4<F>,
    dout: &Tensor4<F>,
    has_bias: bool,
) -> (Vec<F>, Option<Vec<F>>) {
    let in_width = input.sample_len();
    let out_width = dout.sample_len();
    let mut dweight = vec![F::zero(); out_width * in_width];
    let mut dbias = vec![F::zero(); out_width];
    dweight
        .par_chunks_mut(in_width)
        .zip(dbias.par_iter_mut())
        .enumerate()
        .for_each(|(o, (dwrow, db))| {
            for n in 0..input.n {
                let g = dout.sample(n)[o];
                if g == F::zero() {
                    continue;
                }
                *db += g;
                for (dv, xv) in dwrow.iter_mut().zip(input.sample(n)) {
                    *dv += g * *xv;
                }
            }
        });
    (dweight, has_bias.then_some(dbias))
}

pub(super) fn full_backward_input<F: Real>(
    dout: &Tensor4<F>,
    weight: &[F],
    in_width: usize,
) -> Tensor4<F> {
    let out_width = dout.sample_len();
    let mut dinp = Tensor4::zeros(dout.n, in_width, 1, 1);
    dinp.data
        .par_chunks_mut(in_width)
        .zip(dout.data.par_chunks(out_width))
        .for_each(|(dx, go)| {
            for (o, g) in go.iter().enumerate() {
                if *g == F::zero() {
                    continue;
                }
                for (dv, wv) in dx.iter_mut().zip(&weight[o * in_width..][..in_width]) {
                    *dv += *g * *wv;
                }
            }
        });
    dinp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_hand_computation() {
        // 1 sample, 1 channel, 3x3 input, 2x2 kernel, stride 1, no pad
        let input = Tensor4::from_data(
            1,
            1,
            3,
            3,
            vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        );
        let weight = vec![1.0, 0.0, 0.0, -1.0]; // picks x[0][0] - x[1][1]
        let out = conv_forward(&input, &weight, Some(&[0.5]), 1, (2, 2), 1, 0, 2, 2);
        // windows: (1-5), (2-6), (4-8), (5-9), plus bias 0.5
        assert_eq!(out.data, vec![-3.5, -3.5, -3.5, -3.5]);
    }

    #[test]
    fn conv_padding_and_stride_match_direct_sum() {
        // random-ish fixed values, 2 in channels, 3 out channels, pad 1 stride 2
        let mut v = 0.3f64;
        let mut next = || {
            v = (v * 31.7 + 0.11).rem_euclid(2.0) - 1.0;
            v
        };
        let input = Tensor4::from_data(2, 2, 5, 4, (0..80).map(|_| next()).collect());
        let weight: Vec<f64> = (0..3 * 2 * 9).map(|_| next()).collect();
        let bias: Vec<f64> = (0..3).map(|_| next()).collect();
        let out = conv_forward(&input, &weight, Some(&bias), 3, (3, 3), 2, 1, 3, 2);
        // direct definition with explicit zero padding
        for n in 0..2 {
            for oc in 0..3 {
                for oy in 0..3 {
                    for ox in 0..2 {
                        let mut acc = bias[oc];
                        for ic in 0..2 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * 2 + ky) as isize - 1;
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if iy < 0 || iy >= 5 || ix < 0 || ix >= 4 {
                                        continue;
                                    }
                                    acc += weight[((oc * 2 + ic) * 3 + ky) * 3 + kx]
                                        * input.at(n, ic, iy as usize, ix as usize);
                                }
                            }
                        }
                        assert!((out.at(n, oc, oy, ox) - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn pool_routes_gradient_to_the_max() {
        let input = Tensor4::from_data(1, 1, 2, 2, vec![1.0f64, 4.0, 3.0, 2.0]);
        let (out, arg) = pool_forward(&input, 2, 2);
        assert_eq!(out.data, vec![4.0]);
        assert_eq!(arg, vec![1]);
        let dout = Tensor4::from_data(1, 1, 1, 1, vec![2.5f64]);
        let dinp = pool_backward(&dout, &arg, (1, 2, 2));
        assert_eq!(dinp.data, vec![0.0, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn pool_tie_prefers_scan_order() {
        let input = Tensor4::from_data(1, 1, 2, 2, vec![7.0f64, 7.0, 7.0, 7.0]);
        let (_, arg) = pool_forward(&input, 2, 2);
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn bn_normalizes_to_zero_mean_unit_var() {
        let mut x = Tensor4::from_data(2, 1, 1, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (mean, var, inv_std) = bn_batch_stats(&x);
        assert!((mean[0] - 3.5).abs() < 1e-12);
        assert!((var[0] - 35.0 / 12.0).abs() < 1e-12);
        let bn = BatchNormState::<f64>::identity(1);
        bn_apply(&mut x, &mean, &inv_std, &bn.gamma, &bn.beta);
        let m: f64 = x.data.iter().sum::<f64>() / 6.0;
        let v: f64 = x.data.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 6.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-4); // eps shifts it slightly below 1
    }

    #[test]
    fn full_layer_is_a_matmul() {
        let input = Tensor4::from_data(2, 3, 1, 1, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let weight = vec![1.0, 0.5, -1.0, 0.0, 2.0, 1.0];
        let out = full_forward(&input, &weight, Some(&[10.0, 20.0]), 2);
        assert_eq!(out.data, vec![1.0 + 1.0 - 3.0 + 10.0, 4.0 + 3.0 + 20.0, 4.0 + 2.5 - 6.0 + 10.0, 10.0 + 6.0 + 20.0]);
    }

    #[test]
    fn full_backward_matches_transpose() {
        let input = Tensor4::from_data(2, 2, 1, 1, vec![1.0f64, 2.0, 3.0, 4.0]);
        let dout = Tensor4::from_data(2, 2, 1, 1, vec![1.0f64, 0.0, 0.0, 1.0]);
        let weight = vec![5.0, 6.0, 7.0, 8.0];
        let (dw, db) = full_backward_params(&input, &dout, true);
        // dw[o][i] = sum_n dout[n][o] * x[n][i]
        assert_eq!(dw, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(db.unwrap(), vec![1.0, 1.0]);
        let dx = full_backward_input(&dout, &weight, 2);
        assert_eq!(dx.data, vec![5.0, 6.0, 7.0, 8.0]);
    }
}
