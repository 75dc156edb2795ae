//! Dense row-major tensors.
//!
//! Layout is row-major with the last axis fastest. Feature maps are stored as
//! `[batch, depth, y, x]` and since `x == 1` everywhere in this crate, a
//! channel's y-axis is one contiguous run of values.

use std::fmt;
use std::iter::Sum;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Scalar type for tensors: `f32` for training and inference, `f64` for
/// gradient checks.
pub trait Real: Float + Sum + Default + fmt::Debug + fmt::Display + Send + Sync + 'static {
    fn cast(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn cast(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn cast(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape { dims, reason: "extents must be >= 1" });
        }
        let mut count: usize = 1;
        for &d in &dims {
            count = count.checked_mul(d).ok_or(Error::InvalidShape {
                dims: dims.clone(),
                reason: "element count overflows usize",
            })?;
        }
        // Vec<T> cannot hold more than isize::MAX bytes.
        if count > isize::MAX as usize / 8 {
            return Err(Error::InvalidShape { dims, reason: "element count too large" });
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// How to populate a new tensor.
#[derive(Debug, Clone)]
pub enum Fill<T> {
    Zeros,
    Constant(T),
    /// Uniform on `[lo, hi)` drawn from the ChaCha8 fill stream of `seed`.
    Uniform { lo: f64, hi: f64, seed: u64 },
    Values(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    values: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, fill: Fill<T>) -> Result<Self> {
        let n = shape.numel();
        let values = match fill {
            Fill::Zeros => vec![T::zero(); n],
            Fill::Constant(c) => vec![c; n],
            Fill::Uniform { lo, hi, seed } => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidArgument(format!("uniform bounds [{lo}, {hi})")));
                }
                let mut rng = stream_rng(seed, Stream::Fill, 0);
                (0..n).map(|_| T::cast(lo + (hi - lo) * rng.random::<f64>())).collect()
            }
            Fill::Values(v) => {
                if v.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "shape {shape} needs {n} values, got {}",
                        v.len()
                    )));
                }
                v
            }
        };
        Ok(Tensor { shape, values, grad: None })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(Shape::new(dims)?, Fill::Zeros)
    }

    pub fn from_vec(dims: &[usize], values: Vec<T>) -> Result<Self> {
        Self::new(Shape::new(dims)?, Fill::Values(values))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Replace the gradient buffer. Its length must match the values.
    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                op: "set_grad",
                left: self.dims().to_vec(),
                right: vec![grad.len()],
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Values and gradient borrowed together, for in-place parameter updates.
    pub fn values_and_grad_mut(&mut self) -> (&mut [T], Option<&[T]>) {
        (&mut self.values, self.grad.as_deref())
    }

    /// Same values under a new shape with equal element count; drops the grad.
    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.values.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.dims().to_vec(),
                right: dims.to_vec(),
            });
        }
        Ok(Tensor { shape, values: self.values, grad: None })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&a| f(a)).collect(),
            grad: None,
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), values, grad: None })
    }

    /// Left-to-right sum in storage order.
    pub fn sum(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::cast(self.values.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Fails with [`Error::NonFinite`] naming `what` if any entry is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Convert element type; used to lift `f32` data into `f64` checks.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| U::cast(v.to_f64_lossy())).collect(),
            grad: None,
        }
    }
}
