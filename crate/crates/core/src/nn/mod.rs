//! Layers with hand-derived forward and backward passes.
//!
//! Every layer follows the same contract ([`Layer`]): `forward` runs in
//! train mode and caches what `backward` needs, `infer` is a pure function of
//! the frozen layer, and `backward` consumes the cache, writes each
//! parameter's gradient buffer (overwriting any previous gradient) and returns
//! the gradient with respect to the layer input.
//!
//! Feature maps are `[batch, channels, y, 1]`.

mod activation;
mod batchnorm;
mod conv;
pub mod gradcheck;
mod linear;
mod pool;

pub use activation::Relu;
pub use batchnorm::BatchNorm2d;
pub use conv::Conv2d;
pub use gradcheck::{gradcheck, gradcheck_with, GradCheckReport};
pub use linear::Linear;
pub use pool::AvgPoolY;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Convolution kernels and linear weight matrices.
    Weight,
    Bias,
    /// Batch-norm gamma.
    Scale,
    /// Batch-norm beta.
    Shift,
}

/// A learnable tensor with a stable, dotted name (`block0.conv1.weight`).
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub role: ParamRole,
    pub tensor: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, role: ParamRole, tensor: Tensor<T>) -> Self {
        Param { name: name.into(), role, tensor }
    }
}

pub trait Layer<T: Real> {
    /// Train-mode forward; caches activations for [`Layer::backward`].
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>>;

    /// Inference-mode forward. Never mutates the layer.
    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>>;

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
}

pub(crate) fn expect_rank4(x: &Tensor<impl Real>, op: &'static str) -> Result<(usize, usize, usize)> {
    match *x.dims() {
        [b, c, y, 1] => Ok((b, c, y)),
        _ => Err(Error::ShapeMismatch { op, left: x.dims().to_vec(), right: vec![0, 0, 0, 1] }),
    }
}

pub(crate) fn expect_same_dims(expected: &[usize], got: &Tensor<impl Real>, op: &'static str) -> Result<()> {
    if got.dims() != expected {
        return Err(Error::ShapeMismatch { op, left: expected.to_vec(), right: got.dims().to_vec() });
    }
    Ok(())
}

/// Dot product with eight interleaved partial sums so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + xa[k] * xb[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Four dot products against one shared `x`, each accumulated exactly as
/// [`dot`] would, so `dot4(w, x)[i] == dot(w[i], x)` bit for bit.
#[inline(always)]
pub(crate) fn dot4<T: Real>(w: [&[T]; 4], x: &[T]) -> [T; 4] {
    let n = x.len();
    assert!(w.iter().all(|r| r.len() == n));
    let mut acc = [[T::zero(); 8]; 4];
    let mut i = 0;
    while i + 8 <= n {
        let wv: [[T; 8]; 4] = std::array::from_fn(|r| w[r][i..i + 8].try_into().unwrap());
        let xv: [T; 8] = x[i..i + 8].try_into().unwrap();
        for (a, wr) in acc.iter_mut().zip(&wv) {
            for k in 0..8 {
                a[k] = a[k] + wr[k] * xv[k];
            }
        }
        i += 8;
    }
    let mut out = [T::zero(); 4];
    for ((o, a), row) in out.iter_mut().zip(&acc).zip(&w) {
        let mut tail = T::zero();
        for (&wi, &xi) in row[i..].iter().zip(&x[i..]) {
            tail = tail + wi * xi;
        }
        *o = ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7])) + tail;
    }
    out
}

/// One shared `w` against four rows of `x`, accumulated exactly as [`dot`]
/// would, so `dot_shared4(w, x)[i] == dot(w, x[i])` bit for bit.
pub(crate) fn dot_shared4<T: Real>(w: &[T], x: [&[T]; 4]) -> [T; 4] {
    let n = w.len();
    assert!(x.iter().all(|r| r.len() == n));
    let full = n - n % 8;
    let acc = lanes_shared4(&w[..full], x.map(|r| &r[..full]));
    std::array::from_fn(|b| {
        let a = acc[b];
        let mut tail = T::zero();
        for (&wi, &xi) in w[full..].iter().zip(&x[b][full..]) {
            tail = tail + wi * xi;
        }
        ((a[0] + a[4]) + (a[1] + a[5])) + ((a[2] + a[6]) + (a[3] + a[7])) + tail
    })
}

/// Lane sums over slices whose common length is a multiple of 8.
fn lanes_shared4<T: Real>(w: &[T], x: [&[T]; 4]) -> [[T; 8]; 4] {
    #[cfg(target_arch = "x86_64")]
    if std::any::TypeId::of::<T>() == std::any::TypeId::of::<f32>() {
        // SAFETY: T is f32, so the reinterpreted slices and result are the
        // same types with the same layout.
        unsafe {
            let cast = |s: &[T]| std::slice::from_raw_parts(s.as_ptr().cast::<f32>(), s.len());
            let acc = sse::lanes_shared4(cast(w), x.map(cast));
            return std::mem::transmute_copy(&acc);
        }
    }
    let mut acc = [[T::zero(); 8]; 4];
    for i in (0..w.len()).step_by(8) {
        for (a, row) in acc.iter_mut().zip(&x) {
            for k in 0..8 {
                a[k] = a[k] + w[i + k] * row[i + k];
            }
        }
    }
    acc
}

// The compiler's own vectorization of the generic loop is erratic, so the
// f32 path is spelled out. Separate mul and add round exactly like the
// scalar code, lane for lane.
#[cfg(target_arch = "x86_64")]
mod sse {
    use std::arch::x86_64::*;

    pub(super) fn lanes_shared4(w: &[f32], x: [&[f32]; 4]) -> [[f32; 8]; 4] {
        let n = w.len();
        assert!(n % 8 == 0 && x.iter().all(|r| r.len() == n));
        // SAFETY: SSE is part of the x86_64 baseline and every load reads
        // 4 floats inside a slice of length n, at offsets i and i + 4 < n.
        unsafe {
            let mut lo = [_mm_setzero_ps(); 4];
            let mut hi = [_mm_setzero_ps(); 4];
            let mut i = 0;
            while i < n {
                let w0 = _mm_loadu_ps(w.as_ptr().wrapping_add(i));
                let w1 = _mm_loadu_ps(w.as_ptr().wrapping_add(i + 4));
                for b in 0..4 {
                    let p = x[b].as_ptr().wrapping_add(i);
                    lo[b] = _mm_add_ps(lo[b], _mm_mul_ps(w0, _mm_loadu_ps(p)));
                    hi[b] = _mm_add_ps(hi[b], _mm_mul_ps(w1, _mm_loadu_ps(p.wrapping_add(4))));
                }
                i += 8;
            }
            let mut out = [[0.0f32; 8]; 4];
            for b in 0..4 {
                _mm_storeu_ps(out[b].as_mut_ptr(), lo[b]);
                _mm_storeu_ps(out[b].as_mut_ptr().wrapping_add(4), hi[b]);
            }
            out
        }
    }
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64).sin()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
        assert_eq!(dot::<f64>(&[], &[]), 0.0);
    }

    #[test]
    fn dot4_is_bitwise_dot() {
        for n in [0, 5, 8, 37, 64] {
            let x: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37).sin()).collect();
            let rows: Vec<Vec<f32>> = (0..4).map(|r| (0..n).map(|i| ((i * 7 + r) as f32).cos() * 1e3).collect()).collect();
            let got = dot4([&rows[0], &rows[1], &rows[2], &rows[3]], &x);
            for r in 0..4 {
                assert_eq!(got[r].to_bits(), dot(&rows[r], &x).to_bits());
            }
        }
    }

    fn shared4_matches<T: Real>(to_bits: fn(T) -> u64) {
        for n in [0, 5, 8, 37, 64, 8000] {
            let w: Vec<T> = (0..n).map(|i| T::cast((i as f64 * 0.37).sin())).collect();
            let rows: Vec<Vec<T>> =
                (0..4).map(|r| (0..n).map(|i| T::cast(((i * 7 + r) as f64).cos() * 1e3)).collect()).collect();
            let got = dot_shared4(&w, [&rows[0], &rows[1], &rows[2], &rows[3]]);
            for r in 0..4 {
                assert_eq!(to_bits(got[r]), to_bits(dot(&w, &rows[r])), "n {n} row {r}");
            }
        }
    }

    #[test]
    fn dot_shared4_is_bitwise_dot() {
        shared4_matches::<f32>(|v| v.to_bits() as u64);
        shared4_matches::<f64>(f64::to_bits);
    }
}
