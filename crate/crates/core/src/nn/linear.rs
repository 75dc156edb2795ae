use rand::Rng;

use super::{axpy, dot, dot4, dot_shared4, expect_same_dims, Layer, Param, ParamRole};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Fully connected layer `y = W x + b` over rows of a `[batch, in]` input.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Linear {
            weight: Param::new(format!("{name}.weight"), ParamRole::Weight, Tensor::zeros(&[out_features, in_features])?),
            bias: Param::new(format!("{name}.bias"), ParamRole::Bias, Tensor::zeros(&[out_features])?),
            cache: None,
        })
    }

    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.in_features() as f64).sqrt();
        for w in self.weight.tensor.values_mut() {
            *w = T::cast(rng.random_range(-bound..bound));
        }
        self.bias.tensor.values_mut().iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn in_features(&self) -> usize {
        self.weight.tensor.dims()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.tensor.dims()[0]
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        match *input.dims() {
            [b, f] if f == self.in_features() => Ok(b),
            _ => Err(Error::ShapeMismatch {
                op: "linear_forward",
                left: vec![0, self.in_features()],
                right: input.dims().to_vec(),
            }),
        }
    }
}

impl<T: Real> Layer<T> for Linear<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_input(input)?;
        let (n_in, n_out) = (self.in_features(), self.out_features());
        let w = self.weight.tensor.values();
        let bias = self.bias.tensor.values();
        let x = input.values();
        let mut out = vec![T::zero(); b * n_out];
        // Four batch rows share each pass over a W row, cutting weight
        // traffic by four. Every output is still one dot product accumulated
        // in the same order, so results do not depend on the batch size.
        let xr = |i: usize| &x[i * n_in..][..n_in];
        let wr = |o: usize| &w[o * n_in..][..n_in];
        let full = b - b % 4;
        for b0 in (0..full).step_by(4) {
            let xs = [xr(b0), xr(b0 + 1), xr(b0 + 2), xr(b0 + 3)];
            for o in 0..n_out {
                for (i, v) in dot_shared4(wr(o), xs).into_iter().enumerate() {
                    out[(b0 + i) * n_out + o] = bias[o] + v;
                }
            }
        }
        for bi in full..b {
            let orow = &mut out[bi * n_out..][..n_out];
            let mut o = 0;
            while o + 4 <= n_out {
                let d = dot4([wr(o), wr(o + 1), wr(o + 2), wr(o + 3)], xr(bi));
                for (i, v) in d.into_iter().enumerate() {
                    orow[o + i] = bias[o + i] + v;
                }
                o += 4;
            }
            for o in o..n_out {
                orow[o] = bias[o] + dot(wr(o), xr(bi));
            }
        }
        Tensor::from_vec(&[b, n_out], out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.take().ok_or(Error::MissingCache("linear"))?;
        let b = input.dims()[0];
        let (n_in, n_out) = (self.in_features(), self.out_features());
        expect_same_dims(&[b, n_out], grad_out, "linear_backward")?;
        let w = self.weight.tensor.values();
        let x = input.values();
        let g = grad_out.values();

        let mut grad_w = vec![T::zero(); n_out * n_in];
        let mut grad_b = vec![T::zero(); n_out];
        let mut grad_x = vec![T::zero(); b * n_in];
        for bi in 0..b {
            let xr = &x[bi * n_in..][..n_in];
            let gr = &g[bi * n_out..][..n_out];
            let gx = &mut grad_x[bi * n_in..][..n_in];
            for (o, &go) in gr.iter().enumerate() {
                grad_b[o] = grad_b[o] + go;
                if go != T::zero() {
                    axpy(go, xr, &mut grad_w[o * n_in..][..n_in]);
                    axpy(go, &w[o * n_in..][..n_in], gx);
                }
            }
        }
        self.weight.tensor.set_grad(grad_w)?;
        self.bias.tensor.set_grad(grad_b)?;
        Tensor::from_vec(&[b, n_in], grad_x)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::{Fill, Shape};

    #[test]
    fn identity_weight() {
        let mut l = Linear::<f32>::new("fc", 3, 3).unwrap();
        for i in 0..3 {
            l.weight.tensor.values_mut()[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        assert_eq!(l.infer(&x).unwrap(), x);
    }

    #[test]
    fn hand_example() {
        let mut l = Linear::<f64>::new("fc", 2, 1).unwrap();
        l.weight.tensor.values_mut().copy_from_slice(&[1.0, 2.0]);
        l.bias.tensor.values_mut()[0] = 0.5;
        let out = l.infer(&Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(out.values(), &[11.5]);
    }

    #[test]
    fn feature_mismatch() {
        let l = Linear::<f32>::new("fc", 4, 2).unwrap();
        assert!(matches!(l.infer(&Tensor::zeros(&[1, 3]).unwrap()), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn gradcheck_linear() {
        let mut l = Linear::<f64>::new("fc", 13, 6).unwrap();
        l.init_he(&mut stream_rng(1, Stream::Init, 0));
        l.bias.tensor.values_mut().iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 0.1);
        let x = Tensor::new(Shape::new([3, 13]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 2 }).unwrap();
        let rep = gradcheck(&mut l, &x, 1e-4).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn gradcheck_error_shrinks_with_eps() {
        let mut l = Linear::<f64>::new("fc", 5, 3).unwrap();
        l.init_he(&mut stream_rng(4, Stream::Init, 0));
        let x = Tensor::new(Shape::new([2, 5]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 5 }).unwrap();
        // The probe is linear in every entry, so central differences are exact
        // up to roundoff for any eps.
        for eps in [1e-2, 1e-4, 1e-6] {
            let rep = gradcheck(&mut l, &x, eps).unwrap();
            assert!(rep.max_rel_error < 1e-7, "eps {eps}: {rep:?}");
        }
    }
}

