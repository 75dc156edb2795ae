use super::{expect_rank4, expect_same_dims, Layer};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Non-overlapping mean pooling over windows of 2 along y.
///
/// An odd trailing row is dropped (floor semantics) and receives zero gradient.
#[derive(Debug, Clone, Default)]
pub struct AvgPoolY<T> {
    cache: Option<Vec<usize>>,
    _marker: std::marker::PhantomData<T>,
}

pub const POOL_Y: usize = 2;

impl<T: Real> AvgPoolY<T> {
    pub fn new() -> Self {
        AvgPoolY { cache: None, _marker: std::marker::PhantomData }
    }
}

impl<T: Real> Layer<T> for AvgPoolY<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.dims().to_vec());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, y) = expect_rank4(input, "avgpool")?;
        if y < POOL_Y {
            return Err(Error::InvalidArgument(format!("avgpool needs y >= {POOL_Y}, got {y}")));
        }
        let y_out = y / POOL_Y;
        let half = T::cast(0.5);
        let x = input.values();
        let mut out = Vec::with_capacity(b * c * y_out);
        for row in 0..b * c {
            let src = &x[row * y..][..y];
            out.extend((0..y_out).map(|i| (src[2 * i] + src[2 * i + 1]) * half));
        }
        Tensor::from_vec(&[b, c, y_out, 1], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let dims = self.cache.take().ok_or(Error::MissingCache("avgpool"))?;
        let (b, c, y) = (dims[0], dims[1], dims[2]);
        let y_out = y / POOL_Y;
        expect_same_dims(&[b, c, y_out, 1], grad_out, "avgpool_backward")?;
        let half = T::cast(0.5);
        let g = grad_out.values();
        let mut grad_in = vec![T::zero(); b * c * y];
        for row in 0..b * c {
            let dst = &mut grad_in[row * y..][..y];
            for (i, &gv) in g[row * y_out..][..y_out].iter().enumerate() {
                dst[2 * i] = gv * half;
                dst[2 * i + 1] = gv * half;
            }
        }
        Tensor::from_vec(&dims, grad_in)
    }
}
