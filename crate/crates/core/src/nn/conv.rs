use rand::Rng;

use super::{axpy, dot, expect_rank4, expect_same_dims, Layer, Param, ParamRole};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Stride-1 convolution along y with `ky × 1` kernels over all input
/// channels, zero padded by `pad_y` on both ends.
///
/// `out[b, o, y] = bias[o] + Σ_c Σ_dy input[b, c, y + dy - pad_y] * kernels[o, c, dy]`
///
/// With `ky == 1` this is a per-timestamp linear combination of the input
/// channels, i.e. a learned spatial filter.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub kernels: Param<T>,
    pub bias: Option<Param<T>>,
    pad_y: usize,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    /// Zero-initialized convolution. `name` prefixes the parameter names.
    pub fn new(name: &str, in_channels: usize, out_channels: usize, ky: usize, pad_y: usize, with_bias: bool) -> Result<Self> {
        let kernels = Tensor::zeros(&[out_channels, in_channels, ky, 1])?;
        let bias = if with_bias {
            Some(Param::new(format!("{name}.bias"), ParamRole::Bias, Tensor::zeros(&[out_channels])?))
        } else {
            None
        };
        Ok(Conv2d {
            kernels: Param::new(format!("{name}.weight"), ParamRole::Weight, kernels),
            bias,
            pad_y,
            cache: None,
        })
    }

    /// Odd `ky` with `(ky - 1) / 2` padding, so the output keeps the input length.
    pub fn same(name: &str, in_channels: usize, out_channels: usize, ky: usize, with_bias: bool) -> Result<Self> {
        if ky % 2 == 0 {
            return Err(Error::InvalidArgument(format!("same padding needs an odd kernel, got {ky}")));
        }
        Self::new(name, in_channels, out_channels, ky, (ky - 1) / 2, with_bias)
    }

    /// He-uniform kernels (bound `sqrt(6 / fan_in)`), zero bias.
    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.in_channels() * self.ky();
        let bound = (6.0 / fan_in as f64).sqrt();
        for w in self.kernels.tensor.values_mut() {
            *w = T::cast(rng.random_range(-bound..bound));
        }
        if let Some(b) = &mut self.bias {
            b.tensor.values_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.tensor.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.tensor.dims()[1]
    }

    pub fn ky(&self) -> usize {
        self.kernels.tensor.dims()[2]
    }

    pub fn pad_y(&self) -> usize {
        self.pad_y
    }

    pub fn output_len(&self, y: usize) -> Result<usize> {
        let padded = y + 2 * self.pad_y;
        if padded < self.ky() {
            return Err(Error::InvalidArgument(format!(
                "kernel height {} exceeds padded input length {padded}",
                self.ky()
            )));
        }
        Ok(padded - self.ky() + 1)
    }

    /// Range of output rows `y` for which `y + dy - pad` is a valid input row.
    #[inline]
    fn valid_rows(&self, dy: usize, y_in: usize, y_out: usize) -> (usize, usize) {
        let lo = self.pad_y.saturating_sub(dy);
        let hi = (y_in + self.pad_y).saturating_sub(dy).min(y_out);
        (lo, hi.max(lo))
    }

    fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, y) = expect_rank4(input, "conv_forward")?;
        if c != self.in_channels() {
            return Err(Error::ShapeMismatch {
                op: "conv_forward channels",
                left: vec![self.in_channels()],
                right: vec![c],
            });
        }
        let y_out = self.output_len(y)?;
        let o_n = self.out_channels();
        let k = self.kernels.tensor.values();
        let bias = self.bias.as_ref().map(|p| p.tensor.values());
        let x = input.values();
        let yp = y_out + self.ky() - 1;
        let mut padded = vec![T::zero(); c * yp];
        let mut out = vec![T::zero(); b * o_n * y_out];
        let geom = Geometry { c, yp, ky: self.ky(), y_out };
        for bi in 0..b {
            // padded[ci][pad_y + t] = x[bi][ci][t]; rows past the input stay zero
            for ci in 0..c {
                let src = &x[(bi * c + ci) * y..][..y];
                let n = y.min(yp - self.pad_y);
                padded[ci * yp + self.pad_y..][..n].copy_from_slice(&src[..n]);
            }
            let rows = &mut out[bi * o_n * y_out..][..o_n * y_out];
            let mut o = 0;
            while o + OUT_BLOCK <= o_n {
                conv_rows::<T, OUT_BLOCK>(k, bias, &padded, geom, o, &mut rows[o * y_out..][..OUT_BLOCK * y_out]);
                o += OUT_BLOCK;
            }
            for o in o..o_n {
                conv_rows::<T, 1>(k, bias, &padded, geom, o, &mut rows[o * y_out..][..y_out]);
            }
        }
        Tensor::from_vec(&[b, o_n, y_out, 1], out)
    }
}

/// Output channels accumulated together by [`conv_rows`].
const OUT_BLOCK: usize = 4;
/// Output positions per register strip.
const STRIP: usize = 8;

#[derive(Clone, Copy)]
struct Geometry {
    c: usize,
    /// Length of a zero-padded input row.
    yp: usize,
    ky: usize,
    y_out: usize,
}

/// Computes output rows `o..o + N` from one zero-padded sample. Each output
/// starts at its bias and adds `w * x` in (input channel, tap) order.
fn conv_rows<T: Real, const N: usize>(k: &[T], bias: Option<&[T]>, padded: &[T], g: Geometry, o: usize, out: &mut [T]) {
    let start = |n: usize| bias.map_or(T::zero(), |b| b[o + n]);
    let mut y0 = 0;
    while y0 + STRIP <= g.y_out {
        let init: [T; N] = std::array::from_fn(start);
        let acc = strip::<T, N>(k, padded, g, o, y0, init);
        for (n, a) in acc.iter().enumerate() {
            out[n * g.y_out + y0..][..STRIP].copy_from_slice(a);
        }
        y0 += STRIP;
    }
    for n in 0..N {
        for yo in y0..g.y_out {
            let mut a = start(n);
            for ci in 0..g.c {
                for dy in 0..g.ky {
                    a = a + k[((o + n) * g.c + ci) * g.ky + dy] * padded[ci * g.yp + yo + dy];
                }
            }
            out[n * g.y_out + yo] = a;
        }
    }
}

/// One strip of `STRIP` outputs for rows `o..o + N`, starting from `init`.
fn strip<T: Real, const N: usize>(k: &[T], padded: &[T], g: Geometry, o: usize, y0: usize, init: [T; N]) -> [[T; STRIP]; N] {
    #[cfg(target_arch = "x86_64")]
    if N == 4 && std::any::TypeId::of::<T>() == std::any::TypeId::of::<f32>() {
        // SAFETY: T is f32 and N is 4, so every reinterpretation below is
        // between identical types.
        unsafe {
            let cast = |s: &[T]| std::slice::from_raw_parts(s.as_ptr().cast::<f32>(), s.len());
            let init: [f32; 4] = std::mem::transmute_copy(&init);
            let acc = sse::strip4(cast(k), cast(padded), g, o, y0, init);
            return std::mem::transmute_copy(&acc);
        }
    }
    let mut acc = init.map(|v| [v; STRIP]);
    for ci in 0..g.c {
        let row = &padded[ci * g.yp..][..g.yp];
        for dy in 0..g.ky {
            let xv: &[T; STRIP] = row[y0 + dy..y0 + dy + STRIP].try_into().expect("strip length");
            for (n, a) in acc.iter_mut().enumerate() {
                let w = k[((o + n) * g.c + ci) * g.ky + dy];
                for j in 0..STRIP {
                    a[j] = a[j] + w * xv[j];
                }
            }
        }
    }
    acc
}

// Same arithmetic as the generic strip, spelled out because the compiler
// vectorizes that loop poorly.
#[cfg(target_arch = "x86_64")]
mod sse {
    use super::{Geometry, STRIP};
    use std::arch::x86_64::*;

    pub(super) fn strip4(k: &[f32], padded: &[f32], g: Geometry, o: usize, y0: usize, init: [f32; 4]) -> [[f32; STRIP]; 4] {
        assert!(k.len() >= (o + 4) * g.c * g.ky);
        assert!(padded.len() >= g.c * g.yp && y0 + g.ky - 1 + STRIP <= g.yp);
        // SAFETY: SSE is part of the x86_64 baseline; the asserts above keep
        // every kernel index and every 8-wide row load in bounds.
        unsafe {
            let mut lo: [__m128; 4] = std::array::from_fn(|n| _mm_set1_ps(init[n]));
            let mut hi = lo;
            let stride = g.c * g.ky;
            for ci in 0..g.c {
                let row = padded.as_ptr().wrapping_add(ci * g.yp + y0);
                let kc = k.as_ptr().wrapping_add(o * stride + ci * g.ky);
                for dy in 0..g.ky {
                    let x0 = _mm_loadu_ps(row.wrapping_add(dy));
                    let x1 = _mm_loadu_ps(row.wrapping_add(dy + 4));
                    for n in 0..4 {
                        let w = _mm_load1_ps(kc.wrapping_add(n * stride + dy));
                        lo[n] = _mm_add_ps(lo[n], _mm_mul_ps(w, x0));
                        hi[n] = _mm_add_ps(hi[n], _mm_mul_ps(w, x1));
                    }
                }
            }
            let mut out = [[0.0f32; STRIP]; 4];
            for n in 0..4 {
                _mm_storeu_ps(out[n].as_mut_ptr(), lo[n]);
                _mm_storeu_ps(out[n].as_mut_ptr().wrapping_add(4), hi[n]);
            }
            out
        }
    }
}

impl<T: Real> Layer<T> for Conv2d<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.apply(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.apply(input)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.take().ok_or(Error::MissingCache("conv"))?;
        let (b, c, y) = expect_rank4(&input, "conv_backward")?;
        let (o_n, ky) = (self.out_channels(), self.ky());
        let y_out = self.output_len(y)?;
        expect_same_dims(&[b, o_n, y_out, 1], grad_out, "conv_backward")?;

        let x = input.values();
        let g = grad_out.values();
        let k = self.kernels.tensor.values();
        let mut grad_in = vec![T::zero(); x.len()];
        let mut grad_k = vec![T::zero(); k.len()];
        let mut grad_b = vec![T::zero(); o_n];

        for bi in 0..b {
            for o in 0..o_n {
                let g_row = &g[(bi * o_n + o) * y_out..][..y_out];
                grad_b[o] = grad_b[o] + g_row.iter().fold(T::zero(), |a, &v| a + v);
                for ci in 0..c {
                    let base = (bi * c + ci) * y;
                    for dy in 0..ky {
                        let (lo, hi) = self.valid_rows(dy, y, y_out);
                        if lo >= hi {
                            continue;
                        }
                        let s = base + lo + dy - self.pad_y;
                        let n = hi - lo;
                        let kidx = (o * c + ci) * ky + dy;
                        grad_k[kidx] = grad_k[kidx] + dot(&x[s..s + n], &g_row[lo..hi]);
                        axpy(k[kidx], &g_row[lo..hi], &mut grad_in[s..s + n]);
                    }
                }
            }
        }

        self.kernels.tensor.set_grad(grad_k)?;
        if let Some(bias) = &mut self.bias {
            bias.tensor.set_grad(grad_b)?;
        }
        Tensor::from_vec(input.dims(), grad_in)
    }

    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.kernels).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.kernels).chain(self.bias.as_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::{Fill, Shape};

    fn conv_with(k: &[f64], dims: [usize; 4], bias: Option<&[f64]>, pad: usize) -> Conv2d<f64> {
        let mut conv = Conv2d::new("c", dims[1], dims[0], dims[2], pad, bias.is_some()).unwrap();
        conv.kernels.tensor.values_mut().copy_from_slice(k);
        if let (Some(p), Some(b)) = (conv.bias.as_mut(), bias) {
            p.tensor.values_mut().copy_from_slice(b);
        }
        conv
    }

    #[test]
    fn spatial_combination_example() {
        let conv = conv_with(&[0.5, -1.0, 2.0], [1, 3, 1, 1], Some(&[0.25]), 0);
        let x = Tensor::from_vec(&[1, 3, 2, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        // t0: 0.5*1 - 3 + 10 + 0.25, t1: 1 - 4 + 12 + 0.25
        assert_eq!(conv.infer(&x).unwrap().values(), &[7.75, 9.25]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let conv = conv_with(&[0.3, -0.7, 1.1, 2.0, 0.1, 0.0], [2, 3, 1, 1], Some(&[1.5, -2.0]), 0);
        let out = conv.infer(&Tensor::zeros(&[2, 3, 4, 1]).unwrap()).unwrap();
        for (i, v) in out.values().iter().enumerate() {
            let expected = if (i / 4) % 2 == 0 { 1.5 } else { -2.0 };
            assert_eq!(*v, expected);
        }
    }

    #[test]
    fn one_hot_selects_channel() {
        let conv = conv_with(&[0.0, 1.0, 0.0], [1, 3, 1, 1], Some(&[0.0]), 0);
        let x = Tensor::from_vec(&[1, 3, 3, 1], (0..9).map(|v| v as f64 * 1.7).collect()).unwrap();
        assert_eq!(conv.infer(&x).unwrap().values(), &x.values()[3..6]);
    }

    #[test]
    fn same_padding_keeps_length() {
        let conv = Conv2d::<f32>::same("c", 3, 4, 9, false).unwrap();
        assert_eq!(conv.pad_y(), 4);
        let out = conv.infer(&Tensor::zeros(&[2, 3, 20, 1]).unwrap()).unwrap();
        assert_eq!(out.dims(), &[2, 4, 20, 1]);
        assert!(Conv2d::<f32>::same("c", 3, 4, 4, false).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let conv = Conv2d::<f32>::new("c", 3, 1, 5, 0, false).unwrap();
        assert!(matches!(
            conv.infer(&Tensor::zeros(&[1, 2, 8, 1]).unwrap()),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            conv.infer(&Tensor::zeros(&[1, 3, 4, 1]).unwrap()),
            Err(Error::InvalidArgument(_))
        ));
        let mut conv = conv;
        assert!(matches!(
            conv.backward(&Tensor::zeros(&[1, 1, 4, 1]).unwrap()),
            Err(Error::MissingCache(_))
        ));
    }

    #[test]
    fn single_weight_adjoint() {
        let mut conv = conv_with(&[-1.5], [1, 1, 1, 1], Some(&[0.0]), 0);
        let x = Tensor::from_vec(&[1, 1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        conv.forward(&x).unwrap();
        let g = Tensor::from_vec(&[1, 1, 3, 1], vec![2.0, -1.0, 0.5]).unwrap();
        let gi = conv.backward(&g).unwrap();
        assert_eq!(gi.values(), &[-3.0, 1.5, -0.75]);
        assert_eq!(conv.bias.as_ref().unwrap().tensor.grad().unwrap(), &[1.5]);
        assert_eq!(conv.kernels.tensor.grad().unwrap(), &[2.0 - 2.0 + 1.5]);
    }

    #[test]
    fn bias_grad_sums_batch_and_positions() {
        let mut conv = conv_with(&[1.0, 1.0], [2, 1, 1, 1], Some(&[0.0, 0.0]), 0);
        conv.forward(&Tensor::zeros(&[2, 1, 3, 1]).unwrap()).unwrap();
        let g = Tensor::from_vec(&[2, 2, 3, 1], (1..=12).map(f64::from).collect()).unwrap();
        conv.backward(&g).unwrap();
        // o=0: (1+2+3) + (7+8+9); o=1: (4+5+6) + (10+11+12)
        assert_eq!(conv.bias.as_ref().unwrap().tensor.grad().unwrap(), &[30.0, 48.0]);
    }

    fn random_conv(c: usize, o: usize, ky: usize, pad: usize, seed: u64) -> Conv2d<f64> {
        let mut conv = Conv2d::new("c", c, o, ky, pad, true).unwrap();
        let mut rng = stream_rng(seed, Stream::Init, 0);
        conv.init_he(&mut rng);
        for v in conv.bias.as_mut().unwrap().tensor.values_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        conv
    }

    fn random_input(dims: &[usize], seed: u64) -> Tensor<f64> {
        Tensor::new(Shape::new(dims).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed }).unwrap()
    }

    #[test]
    fn gradcheck_small_instance() {
        let mut conv = random_conv(3, 2, 3, 0, 11);
        let rep = gradcheck(&mut conv, &random_input(&[2, 3, 7, 1], 12), 1e-4).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn gradcheck_ky9_same_padding() {
        let mut conv = Conv2d::<f64>::same("c", 3, 4, 9, true).unwrap();
        conv.init_he(&mut stream_rng(3, Stream::Init, 0));
        let rep = gradcheck(&mut conv, &random_input(&[2, 3, 20, 1], 4), 1e-4).unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }

    #[test]
    fn linear_in_input() {
        let conv = random_conv(4, 3, 9, 4, 5);
        let mut conv = conv;
        conv.bias = None;
        let x = random_input(&[1, 4, 12, 1], 6);
        let y = random_input(&[1, 4, 12, 1], 7);
        let (a, b) = (1.7, -0.4);
        let combo = x.scale(a).add(&y.scale(b)).unwrap();
        let lhs = conv.infer(&combo).unwrap();
        let rhs = conv.infer(&x).unwrap().scale(a).add(&conv.infer(&y).unwrap().scale(b)).unwrap();
        for (l, r) in lhs.values().iter().zip(rhs.values()) {
            assert!((l - r).abs() <= 1e-5 * r.abs().max(1.0));
        }
    }

    #[test]
    fn f32_output_is_bitwise_ordered_sum() {
        // 6 outputs cover the 4-row block and the single-row remainder; 21
        // positions cover full strips and the scalar tail.
        let (b, c, o_n, ky, pad, y) = (2, 3, 6, 9, 4, 21);
        let mut conv = Conv2d::<f32>::new("c", c, o_n, ky, pad, true).unwrap();
        conv.init_he(&mut stream_rng(9, Stream::Init, 0));
        for (i, v) in conv.bias.as_mut().unwrap().tensor.values_mut().iter_mut().enumerate() {
            *v = i as f32 * 0.3 - 0.7;
        }
        let x: Tensor<f32> = Tensor::new(Shape::new([b, c, y, 1]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 2 }).unwrap();
        let out = conv.infer(&x).unwrap();
        let (k, bias, xv) = (conv.kernels.tensor.values(), conv.bias.as_ref().unwrap().tensor.values(), x.values());
        for bi in 0..b {
            for o in 0..o_n {
                for t in 0..y {
                    let mut a = bias[o];
                    for ci in 0..c {
                        for dy in 0..ky {
                            let src = t + dy;
                            let v = if src < pad || src - pad >= y { 0.0 } else { xv[(bi * c + ci) * y + src - pad] };
                            a = a + k[(o * c + ci) * ky + dy] * v;
                        }
                    }
                    assert_eq!(out.values()[(bi * o_n + o) * y + t].to_bits(), a.to_bits(), "b {bi} o {o} t {t}");
                }
            }
        }
    }
}
