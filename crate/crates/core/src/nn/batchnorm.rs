use super::{expect_rank4, expect_same_dims, Layer, Param, ParamRole};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over the batch and y axes.
///
/// Train mode normalizes with the batch mean and biased batch variance and
/// folds them into the running statistics as
/// `running = (1 - momentum) * running + momentum * batch`, where the batch
/// variance fed to the running estimate is the unbiased one. Infer mode uses
/// the running statistics only.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    dims: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
}

impl<T: Real> BatchNorm2d<T> {
    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    pub fn new(name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), ParamRole::Scale, Tensor::from_vec(&[channels], vec![T::one(); channels])?),
            beta: Param::new(format!("{name}.beta"), ParamRole::Shift, Tensor::zeros(&[channels])?),
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::from_vec(&[channels], vec![T::one(); channels])?,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.tensor.len()
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, y) = expect_rank4(input, "batchnorm")?;
        if c != self.channels() {
            return Err(Error::ShapeMismatch { op: "batchnorm channels", left: vec![self.channels()], right: vec![c] });
        }
        Ok((b, c, y))
    }
}

impl<T: Real> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, y) = self.check_input(input)?;
        let n = b * y;
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "train-mode batchnorm needs at least 2 values per channel, got {n}"
            )));
        }
        let x = input.values();
        let gamma = self.gamma.tensor.values();
        let beta = self.beta.tensor.values();
        let mut out = vec![T::zero(); x.len()];
        let mut x_hat = vec![T::zero(); x.len()];
        let mut inv_std = vec![0.0; c];

        for ci in 0..c {
            let rows = || (0..b).map(move |bi| (bi * c + ci) * y);
            let mut sum = 0.0;
            for r in rows() {
                sum += x[r..r + y].iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            }
            let mean = sum / n as f64;
            let mut sq = 0.0;
            for r in rows() {
                sq += x[r..r + y].iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>();
            }
            let var = sq / n as f64;
            let istd = 1.0 / (var + self.epsilon).sqrt();
            inv_std[ci] = istd;

            let (m, s, g, bt) = (T::cast(mean), T::cast(istd), gamma[ci], beta[ci]);
            for r in rows() {
                for i in r..r + y {
                    let h = (x[i] - m) * s;
                    x_hat[i] = h;
                    out[i] = g * h + bt;
                }
            }

            let mom = self.momentum;
            let unbiased = sq / (n - 1) as f64;
            let rm = &mut self.running_mean.values_mut()[ci];
            *rm = T::cast((1.0 - mom) * rm.to_f64_lossy() + mom * mean);
            let rv = &mut self.running_var.values_mut()[ci];
            *rv = T::cast((1.0 - mom) * rv.to_f64_lossy() + mom * unbiased);
        }

        self.cache = Some(BnCache { dims: input.dims().to_vec(), x_hat, inv_std });
        Tensor::from_vec(input.dims(), out)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, y) = self.check_input(input)?;
        let x = input.values();
        let mut out = vec![T::zero(); x.len()];
        for ci in 0..c {
            let istd = 1.0 / (self.running_var.values()[ci].to_f64_lossy() + self.epsilon).sqrt();
            let scale = T::cast(self.gamma.tensor.values()[ci].to_f64_lossy() * istd);
            let mean = self.running_mean.values()[ci];
            let shift = self.beta.tensor.values()[ci];
            for bi in 0..b {
                let r = (bi * c + ci) * y;
                for i in r..r + y {
                    out[i] = (x[i] - mean) * scale + shift;
                }
            }
        }
        Tensor::from_vec(input.dims(), out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(Error::MissingCache("batchnorm"))?;
        expect_same_dims(&cache.dims, grad_out, "batchnorm_backward")?;
        let (b, c, y) = (cache.dims[0], cache.dims[1], cache.dims[2]);
        let n = (b * y) as f64;
        let g = grad_out.values();
        let gamma = self.gamma.tensor.values();
        let mut grad_in = vec![T::zero(); g.len()];
        let mut grad_gamma = vec![T::zero(); c];
        let mut grad_beta = vec![T::zero(); c];

        for ci in 0..c {
            let rows = || (0..b).map(move |bi| (bi * c + ci) * y);
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for r in rows() {
                for i in r..r + y {
                    let gi = g[i].to_f64_lossy();
                    sum_g += gi;
                    sum_gx += gi * cache.x_hat[i].to_f64_lossy();
                }
            }
            grad_beta[ci] = T::cast(sum_g);
            grad_gamma[ci] = T::cast(sum_gx);
            // dx = gamma * inv_std / n * (n * g - sum(g) - x_hat * sum(g * x_hat))
            let k = gamma[ci].to_f64_lossy() * cache.inv_std[ci] / n;
            let (kt, sum_g_t, sum_gx_t) = (T::cast(k), T::cast(sum_g), T::cast(sum_gx));
            let nt = T::cast(n);
            for r in rows() {
                for i in r..r + y {
                    grad_in[i] = kt * (nt * g[i] - sum_g_t - cache.x_hat[i] * sum_gx_t);
                }
            }
        }

        self.gamma.tensor.set_grad(grad_gamma)?;
        self.beta.tensor.set_grad(grad_beta)?;
        Tensor::from_vec(&cache.dims, grad_in)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use crate::tensor::{Fill, Shape};

    fn per_channel_stats(t: &Tensor<f64>, c: usize) -> Vec<(f64, f64)> {
        let (b, y) = (t.dims()[0], t.dims()[2]);
        (0..c)
            .map(|ci| {
                let vals: Vec<f64> =
                    (0..b).flat_map(|bi| t.values()[(bi * c + ci) * y..][..y].to_vec()).collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
                (m, v)
            })
            .collect()
    }

    #[test]
    fn normalizes_each_channel() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 3).unwrap();
        let x = Tensor::new(Shape::new([4, 3, 6, 1]).unwrap(), Fill::Uniform { lo: -3.0, hi: 5.0, seed: 1 }).unwrap();
        let out = bn.forward(&x).unwrap();
        for (m, v) in per_channel_stats(&out, 3) {
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 1).unwrap();
        bn.beta.tensor.values_mut()[0] = 0.7;
        let out = bn.forward(&Tensor::from_vec(&[2, 1, 3, 1], vec![4.0; 6]).unwrap()).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn two_value_example() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 1).unwrap();
        let out = bn.forward(&Tensor::from_vec(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap()).unwrap();
        let s = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out.values()[0] + s).abs() < 1e-12 && (out.values()[1] - s).abs() < 1e-12);
        assert!((out.values()[0] + 1.0).abs() < 1e-5);
        // running mean 0.9*0 + 0.1*2, running var 0.9*1 + 0.1*2 (unbiased)
        assert!((bn.running_mean.values()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.values()[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn single_value_per_channel_rejected() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 2).unwrap();
        assert!(matches!(bn.forward(&Tensor::zeros(&[1, 2, 1, 1]).unwrap()), Err(Error::InvalidArgument(_))));
        // infer mode has no such restriction
        assert!(bn.infer(&Tensor::zeros(&[1, 2, 1, 1]).unwrap()).is_ok());
    }

    #[test]
    fn infer_is_pure_and_deterministic() {
        let mut bn = BatchNorm2d::<f32>::new("bn", 2).unwrap();
        bn.running_mean.values_mut().copy_from_slice(&[0.5, -1.0]);
        bn.running_var.values_mut().copy_from_slice(&[2.0, 0.25]);
        let before = (bn.running_mean.clone(), bn.running_var.clone());
        let x = Tensor::new(Shape::new([2, 2, 5, 1]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 3 }).unwrap();
        let a = bn.infer(&x).unwrap();
        let b = bn.infer(&x).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_eq!((bn.running_mean.clone(), bn.running_var.clone()), before);
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 3).unwrap();
        let x = Tensor::new(Shape::new([2, 3, 4, 1]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 9 }).unwrap();
        bn.forward(&x).unwrap();
        let gi = bn.backward(&Tensor::zeros(&[2, 3, 4, 1]).unwrap()).unwrap();
        assert!(gi.values().iter().all(|&v| v == 0.0));
        assert!(bn.gamma.tensor.grad().unwrap().iter().all(|&v| v == 0.0));
        assert!(bn.beta.tensor.grad().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn beta_grad_is_channel_sum() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 2).unwrap();
        let x = Tensor::new(Shape::new([2, 2, 3, 1]).unwrap(), Fill::Uniform { lo: -1.0, hi: 1.0, seed: 2 }).unwrap();
        bn.forward(&x).unwrap();
        let g = Tensor::from_vec(&[2, 2, 3, 1], (0..12).map(f64::from).collect()).unwrap();
        bn.backward(&g).unwrap();
        // channel 0 rows: [0,1,2] and [6,7,8]; channel 1: [3,4,5] and [9,10,11]
        assert_eq!(bn.beta.tensor.grad().unwrap(), &[24.0, 42.0]);
    }

    #[test]
    fn gradcheck_train_mode() {
        let mut bn = BatchNorm2d::<f64>::new("bn", 3).unwrap();
        bn.gamma.tensor.values_mut().copy_from_slice(&[1.3, -0.6, 0.9]);
        bn.beta.tensor.values_mut().copy_from_slice(&[0.1, 0.2, -0.3]);
        let x = Tensor::new(Shape::new([4, 3, 6, 1]).unwrap(), Fill::Uniform { lo: -2.0, hi: 2.0, seed: 5 }).unwrap();
        let rep = gradcheck(&mut bn, &x, 1e-4).unwrap();
        assert!(rep.max_rel_error < 1e-5, "{rep:?}");
    }
}
