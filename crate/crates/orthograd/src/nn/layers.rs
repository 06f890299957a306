//! Layer kernels: im2col convolution, batch normalisation, ReLU and dense,
//! each with a manual backward pass.
//!
//! Batch-level loops run through [`crate::parallel`] with fixed chunk
//! boundaries; cross-batch reductions accumulate per chunk and fold in
//! chunk order, so results do not depend on the thread schedule.

use crate::parallel::{self, BATCH_CHUNK};
use crate::scalar::{axpy, dot, sum_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCfg {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvCfg {
    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    /// Rows of the im2col patch matrix: in_ch · k · k.
    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Gather one sample's padded patches: `patches[(ci·k+ky)·k+kx][oy·OW+ox]`.
fn im2col<T: Real>(x: &[T], h: usize, w: usize, cfg: &ConvCfg, patches: &mut [T]) {
    let (oh, ow) = cfg.out_hw(h, w);
    let spatial = oh * ow;
    let k = cfg.kernel;
    for ci in 0..cfg.in_ch {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut patches[((ci * k + ky) * k + kx) * spatial..][..spatial];
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ky) as isize - cfg.pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * cfg.stride + kx) as isize - cfg.pad as isize;
                        dst[ox] = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add of a patch-shaped gradient back onto the input plane.
fn col2im_add<T: Real>(dpatches: &[T], h: usize, w: usize, cfg: &ConvCfg, dx: &mut [T]) {
    let (oh, ow) = cfg.out_hw(h, w);
    let spatial = oh * ow;
    let k = cfg.kernel;
    for ci in 0..cfg.in_ch {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &dpatches[((ci * k + ky) * k + kx) * spatial..][..spatial];
                for oy in 0..oh {
                    let iy = (oy * cfg.stride + ky) as isize - cfg.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * cfg.stride + kx) as isize - cfg.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward over a batch: `x` is (B, C, H, W), `out` (B, O, OH, OW).
#[allow(clippy::too_many_arguments)]
pub fn conv_forward<T: Real>(
    x: &[T],
    batch: usize,
    h: usize,
    w: usize,
    cfg: &ConvCfg,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (oh, ow) = cfg.out_hw(h, w);
    let spatial = oh * ow;
    let klen = cfg.patch_len();
    let in_len = cfg.in_ch * h * w;
    let out_len = cfg.out_ch * spatial;
    parallel::for_each_chunk_mut(out, BATCH_CHUNK * out_len, |chunk_idx, out_chunk| {
        let mut patches = vec![T::ZERO; klen * spatial];
        let base = chunk_idx * BATCH_CHUNK;
        for (s, out_s) in out_chunk.chunks_mut(out_len).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            im2col(&x[sample * in_len..(sample + 1) * in_len], h, w, cfg, &mut patches);
            for o in 0..cfg.out_ch {
                let dst = &mut out_s[o * spatial..(o + 1) * spatial];
                dst.iter_mut().for_each(|v| *v = bias[o]);
                let w_row = &weight[o * klen..(o + 1) * klen];
                for (kidx, &wv) in w_row.iter().enumerate() {
                    axpy(dst, wv, &patches[kidx * spatial..(kidx + 1) * spatial]);
                }
            }
        }
    });
}

/// Gradients w.r.t. the convolution input.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward_input<T: Real>(
    grad_out: &[T],
    batch: usize,
    h: usize,
    w: usize,
    cfg: &ConvCfg,
    weight: &[T],
    dx: &mut [T],
) {
    let (oh, ow) = cfg.out_hw(h, w);
    let spatial = oh * ow;
    let klen = cfg.patch_len();
    let in_len = cfg.in_ch * h * w;
    let out_len = cfg.out_ch * spatial;
    parallel::for_each_chunk_mut(dx, BATCH_CHUNK * in_len, |chunk_idx, dx_chunk| {
        let mut dpatches = vec![T::ZERO; klen * spatial];
        let base = chunk_idx * BATCH_CHUNK;
        for (s, dx_s) in dx_chunk.chunks_mut(in_len).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            dpatches.iter_mut().for_each(|v| *v = T::ZERO);
            let g_s = &grad_out[sample * out_len..(sample + 1) * out_len];
            for o in 0..cfg.out_ch {
                let g_row = &g_s[o * spatial..(o + 1) * spatial];
                let w_row = &weight[o * klen..(o + 1) * klen];
                for (kidx, &wv) in w_row.iter().enumerate() {
                    axpy(&mut dpatches[kidx * spatial..(kidx + 1) * spatial], wv, g_row);
                }
            }
            dx_s.iter_mut().for_each(|v| *v = T::ZERO);
            col2im_add(&dpatches, h, w, cfg, dx_s);
        }
    });
}

/// Gradients w.r.t. weight and bias, accumulated per fixed batch chunk and
/// folded in chunk order.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward_params<T: Real>(
    x: &[T],
    batch: usize,
    h: usize,
    w: usize,
    cfg: &ConvCfg,
    grad_out: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) {
    let (oh, ow) = cfg.out_hw(h, w);
    let spatial = oh * ow;
    let klen = cfg.patch_len();
    let in_len = cfg.in_ch * h * w;
    let out_len = cfg.out_ch * spatial;
    let n_chunks = parallel::chunk_count(batch, BATCH_CHUNK);

    let partials = parallel::map_indexed(n_chunks, |chunk_idx| {
        let mut dw = vec![T::ZERO; cfg.out_ch * klen];
        let mut db = vec![T::ZERO; cfg.out_ch];
        let mut patches = vec![T::ZERO; klen * spatial];
        let start = chunk_idx * BATCH_CHUNK;
        let end = (start + BATCH_CHUNK).min(batch);
        for sample in start..end {
            im2col(&x[sample * in_len..(sample + 1) * in_len], h, w, cfg, &mut patches);
            let g_s = &grad_out[sample * out_len..(sample + 1) * out_len];
            for o in 0..cfg.out_ch {
                let g_row = &g_s[o * spatial..(o + 1) * spatial];
                let dw_row = &mut dw[o * klen..(o + 1) * klen];
                for (kidx, slot) in dw_row.iter_mut().enumerate() {
                    *slot += dot(g_row, &patches[kidx * spatial..(kidx + 1) * spatial]);
                }
                db[o] += T::from_f64(sum_f64(g_row));
            }
        }
        (dw, db)
    });

    dweight.iter_mut().for_each(|v| *v = T::ZERO);
    dbias.iter_mut().for_each(|v| *v = T::ZERO);
    for (dw, db) in partials {
        for (acc, v) in dweight.iter_mut().zip(dw) {
            *acc += v;
        }
        for (acc, v) in dbias.iter_mut().zip(db) {
            *acc += v;
        }
    }
}

/// Per-channel batch statistics over (B, ·, S): mean and 1/√(var + eps).
/// Variance is the biased (population) estimate, matching what the
/// normalisation itself uses.
pub fn bn_batch_stats<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let count = (batch * spatial) as f64;
    let stats = parallel::map_indexed(channels, |c| {
        let mut sum = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            sum += sum_f64(&x[off..off + spatial]);
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            for &v in &x[off..off + spatial] {
                let d = v.to_f64() - mean;
                sq += d * d;
            }
        }
        let var = sq / count;
        (mean, var)
    });
    let mean: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let var: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    (mean, var, inv_std)
}

/// Normalise with the given per-channel statistics and apply the affine
/// parameters: `out = gamma · (x − mean) · inv_std + beta`.
#[allow(clippy::too_many_arguments)]
pub fn bn_apply<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[T],
    beta: &[T],
    out: &mut [T],
) {
    let sample_len = channels * spatial;
    parallel::for_each_chunk_mut(out, BATCH_CHUNK * sample_len, |chunk_idx, out_chunk| {
        let base = chunk_idx * BATCH_CHUNK;
        for (s, out_s) in out_chunk.chunks_mut(sample_len).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            let x_s = &x[sample * sample_len..(sample + 1) * sample_len];
            for c in 0..channels {
                let m = T::from_f64(mean[c]);
                let is = T::from_f64(inv_std[c]);
                let g = gamma[c];
                let bt = beta[c];
                let xs = &x_s[c * spatial..(c + 1) * spatial];
                let os = &mut out_s[c * spatial..(c + 1) * spatial];
                for (o, &v) in os.iter_mut().zip(xs) {
                    *o = g * ((v - m) * is) + bt;
                }
            }
        }
    });
}

/// Batch-norm backward in training mode.
#[allow(clippy::too_many_arguments)]
pub fn bn_backward<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[T],
    grad_out: &[T],
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    let sample_len = channels * spatial;
    let count = (batch * spatial) as f64;

    // Per-channel reductions: dβ = Σ dy, dγ = Σ dy·x̂.
    let sums = parallel::map_indexed(channels, |c| {
        let m = mean[c];
        let is = inv_std[c];
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            for i in 0..spatial {
                let dy = grad_out[off + i].to_f64();
                let xhat = (x[off + i].to_f64() - m) * is;
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
            }
        }
        (sum_dy, sum_dy_xhat)
    });
    for c in 0..channels {
        dbeta[c] = T::from_f64(sums[c].0);
        dgamma[c] = T::from_f64(sums[c].1);
    }

    // dx = γ·inv_std·(dy − Σdy/N − x̂·Σ(dy·x̂)/N)
    parallel::for_each_chunk_mut(dx, BATCH_CHUNK * sample_len, |chunk_idx, dx_chunk| {
        let base = chunk_idx * BATCH_CHUNK;
        for (s, dx_s) in dx_chunk.chunks_mut(sample_len).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            let off_s = sample * sample_len;
            for c in 0..channels {
                let m = mean[c];
                let is = inv_std[c];
                let scale = T::from_f64(gamma[c].to_f64() * is);
                let mean_dy = T::from_f64(sums[c].0 / count);
                let mean_dy_xhat = T::from_f64(sums[c].1 / count);
                let m_t = T::from_f64(m);
                let is_t = T::from_f64(is);
                let off = off_s + c * spatial;
                for i in 0..spatial {
                    let dy = grad_out[off + i];
                    let xhat = (x[off + i] - m_t) * is_t;
                    dx_s[c * spatial + i] = scale * (dy - mean_dy - xhat * mean_dy_xhat);
                }
            }
        }
    });
}

const ELEM_CHUNK: usize = 1 << 14;

pub fn relu_forward<T: Real>(x: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), out.len());
    parallel::for_each_chunk_mut(out, ELEM_CHUNK, |chunk_idx, chunk| {
        let base = chunk_idx * ELEM_CHUNK;
        for (i, o) in chunk.iter_mut().enumerate() {
            *o = x[base + i].maximum(T::ZERO);
        }
    });
}

pub fn relu_backward<T: Real>(x: &[T], grad_out: &[T], dx: &mut [T]) {
    debug_assert_eq!(x.len(), dx.len());
    parallel::for_each_chunk_mut(dx, ELEM_CHUNK, |chunk_idx, chunk| {
        let base = chunk_idx * ELEM_CHUNK;
        for (i, d) in chunk.iter_mut().enumerate() {
            *d = if x[base + i] > T::ZERO {
                grad_out[base + i]
            } else {
                T::ZERO
            };
        }
    });
}

/// Dense forward: `x` (B, F_in), weight (F_in, F_out) row-major, out (B, F_out).
pub fn dense_forward<T: Real>(
    x: &[T],
    batch: usize,
    f_in: usize,
    f_out: usize,
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) {
    parallel::for_each_chunk_mut(out, BATCH_CHUNK * f_out, |chunk_idx, out_chunk| {
        let base = chunk_idx * BATCH_CHUNK;
        for (s, out_s) in out_chunk.chunks_mut(f_out).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            out_s.copy_from_slice(bias);
            let x_s = &x[sample * f_in..(sample + 1) * f_in];
            for (fi, &xv) in x_s.iter().enumerate() {
                axpy(out_s, xv, &weight[fi * f_out..(fi + 1) * f_out]);
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
pub fn dense_backward<T: Real>(
    x: &[T],
    batch: usize,
    f_in: usize,
    f_out: usize,
    weight: &[T],
    grad_out: &[T],
    dx: &mut [T],
    dweight: &mut [T],
    dbias: &mut [T],
) {
    parallel::for_each_chunk_mut(dx, BATCH_CHUNK * f_in, |chunk_idx, dx_chunk| {
        let base = chunk_idx * BATCH_CHUNK;
        for (s, dx_s) in dx_chunk.chunks_mut(f_in).enumerate() {
            let sample = base + s;
            debug_assert!(sample < batch);
            let g_s = &grad_out[sample * f_out..(sample + 1) * f_out];
            for (fi, slot) in dx_s.iter_mut().enumerate() {
                *slot = dot(&weight[fi * f_out..(fi + 1) * f_out], g_s);
            }
        }
    });

    let n_chunks = parallel::chunk_count(batch, BATCH_CHUNK);
    let partials = parallel::map_indexed(n_chunks, |chunk_idx| {
        let mut dw = vec![T::ZERO; f_in * f_out];
        let mut db = vec![T::ZERO; f_out];
        let start = chunk_idx * BATCH_CHUNK;
        let end = (start + BATCH_CHUNK).min(batch);
        for sample in start..end {
            let x_s = &x[sample * f_in..(sample + 1) * f_in];
            let g_s = &grad_out[sample * f_out..(sample + 1) * f_out];
            for (fi, &xv) in x_s.iter().enumerate() {
                axpy(&mut dw[fi * f_out..(fi + 1) * f_out], xv, g_s);
            }
            for (acc, &g) in db.iter_mut().zip(g_s) {
                *acc += g;
            }
        }
        (dw, db)
    });
    dweight.iter_mut().for_each(|v| *v = T::ZERO);
    dbias.iter_mut().for_each(|v| *v = T::ZERO);
    for (dw, db) in partials {
        for (acc, v) in dweight.iter_mut().zip(dw) {
            *acc += v;
        }
        for (acc, v) in dbias.iter_mut().zip(db) {
            *acc += v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shape_arithmetic() {
        let cfg = ConvCfg {
            in_ch: 3,
            out_ch: 32,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        assert_eq!(cfg.out_hw(32, 32), (16, 16));
        assert_eq!(cfg.out_hw(16, 16), (8, 8));
        assert_eq!(cfg.patch_len(), 27);
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        // 1x1 kernel, stride 1, weight 1: output == input.
        let cfg = ConvCfg {
            in_ch: 1,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        };
        let x: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let mut out = vec![0.0; 9];
        conv_forward(&x, 1, 3, 3, &cfg, &[1.0], &[0.0], &mut out);
        assert_eq!(out, x);
    }

    #[test]
    fn conv_known_small_case() {
        // 2x2 input, 2x2 kernel of ones, no pad: single output = sum.
        let cfg = ConvCfg {
            in_ch: 1,
            out_ch: 1,
            kernel: 2,
            stride: 1,
            pad: 0,
        };
        let x = vec![1.0f64, 2.0, 3.0, 4.0];
        let mut out = vec![0.0; 1];
        conv_forward(&x, 1, 2, 2, &cfg, &[1.0, 1.0, 1.0, 1.0], &[0.5], &mut out);
        assert_eq!(out[0], 10.5);
    }

    #[test]
    fn bn_stats_normalise_to_zero_one() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let (mean, _var, inv_std) = bn_batch_stats(&x, 5, 2, 4, 1e-12);
        let mut out = vec![0.0; 40];
        bn_apply(&x, 5, 2, 4, &mean, &inv_std, &[1.0, 1.0], &[0.0, 0.0], &mut out);
        for c in 0..2 {
            let vals: Vec<f64> = (0..5)
                .flat_map(|b| out[(b * 2 + c) * 4..(b * 2 + c + 1) * 4].to_vec())
                .collect();
            let m: f64 = vals.iter().sum::<f64>() / 20.0;
            let v: f64 = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-9, "mean {m}");
            assert!((v - 1.0).abs() < 1e-6, "var {v}");
        }
    }

    #[test]
    fn relu_zeroes_negatives_and_their_gradient() {
        let x = vec![-1.0f32, 0.0, 2.0, -0.5];
        let mut out = vec![0.0; 4];
        relu_forward(&x, &mut out);
        assert_eq!(out, vec![0.0, 0.0, 2.0, 0.0]);
        let dy = vec![1.0f32; 4];
        let mut dx = vec![0.0; 4];
        relu_backward(&x, &dy, &mut dx);
        assert_eq!(dx, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_matches_manual_product() {
        // x = [1, 2], W = [[1, 2, 3], [4, 5, 6]], b = [0.1, 0.2, 0.3]
        let x = vec![1.0f64, 2.0];
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = vec![0.1, 0.2, 0.3];
        let mut out = vec![0.0; 3];
        dense_forward(&x, 1, 2, 3, &w, &b, &mut out);
        assert_eq!(out, vec![9.1, 12.2, 15.3]);
    }
}
