use super::{expect_same_dims, Layer};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `max(0, x)`; the gradient at exactly 0 is taken as 0.
#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }
}

impl<T: Real> Layer<T> for Relu<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(input.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.take().ok_or(Error::MissingCache("relu"))?;
        expect_same_dims(input.dims(), grad_out, "relu_backward")?;
        let g = input
            .values()
            .iter()
            .zip(grad_out.values())
            .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
            .collect();
        Tensor::from_vec(input.dims(), g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_and_backward() {
        let mut r = Relu::<f32>::new();
        let out = r.forward(&Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &[0.0, 0.0, 2.0]);

        r.forward(&Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap()).unwrap();
        let g = r.backward(&Tensor::from_vec(&[2], vec![5.0, 5.0]).unwrap()).unwrap();
        assert_eq!(g.values(), &[0.0, 5.0]);
    }

    #[test]
    fn zero_has_zero_gradient() {
        let mut r = Relu::<f64>::new();
        r.forward(&Tensor::from_vec(&[1], vec![0.0]).unwrap()).unwrap();
        assert_eq!(r.backward(&Tensor::from_vec(&[1], vec![3.0]).unwrap()).unwrap().values(), &[0.0]);
    }

    proptest! {
        #[test]
        fn idempotent(v in prop::collection::vec(-10.0f32..10.0, 1..50)) {
            let r = Relu::<f32>::new();
            let x = Tensor::from_vec(&[v.len()], v).unwrap();
            let once = r.infer(&x).unwrap();
            prop_assert_eq!(r.infer(&once).unwrap(), once);
        }
    }
}
