use rand::Rng;

use super::config::TEMPORAL_KERNEL;
use crate::error::Result;
use crate::nn::{AvgPoolY, BatchNorm2d, Conv2d, Layer, Param, Relu};
use crate::tensor::{Real, Tensor};

/// Projection on the skip path when the block changes depth.
#[derive(Debug, Clone)]
pub struct Shortcut<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
}

/// Residual block with unequal convolutions:
///
/// ```text
/// x ─ conv 9×1 ─ BN ─ ReLU ─ conv 1×1 ─ BN ─(+)─ ReLU ─ avgpool 2
///  └──────────── [conv 1×1 ─ BN] ─────────────┘
/// ```
///
/// With `equal_convs` the second convolution is 9×1 as well. The projection
/// exists only when the input depth differs from the block width.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    relu1: Relu<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub shortcut: Option<Shortcut<T>>,
    relu_out: Relu<T>,
    pool: AvgPoolY<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(name: &str, in_depth: usize, width: usize, equal_convs: bool, conv_bias: bool) -> Result<Self> {
        let ky2 = if equal_convs { TEMPORAL_KERNEL } else { 1 };
        let shortcut = if in_depth != width {
            Some(Shortcut {
                conv: Conv2d::same(&format!("{name}.shortcut.conv"), in_depth, width, 1, conv_bias)?,
                bn: BatchNorm2d::new(&format!("{name}.shortcut.bn"), width)?,
            })
        } else {
            None
        };
        Ok(ResidualBlock {
            conv1: Conv2d::same(&format!("{name}.conv1"), in_depth, width, TEMPORAL_KERNEL, conv_bias)?,
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), width)?,
            relu1: Relu::new(),
            conv2: Conv2d::same(&format!("{name}.conv2"), width, width, ky2, conv_bias)?,
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), width)?,
            shortcut,
            relu_out: Relu::new(),
            pool: AvgPoolY::new(),
        })
    }

    pub fn init_he<R: Rng>(&mut self, rng: &mut R) {
        self.conv1.init_he(rng);
        self.conv2.init_he(rng);
        if let Some(s) = &mut self.shortcut {
            s.conv.init_he(rng);
        }
    }

    /// Batch norms in parameter order.
    pub fn batch_norms(&self) -> Vec<&BatchNorm2d<T>> {
        let mut v = vec![&self.bn1, &self.bn2];
        v.extend(self.shortcut.as_ref().map(|s| &s.bn));
        v
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        let mut v = vec![&mut self.bn1, &mut self.bn2];
        v.extend(self.shortcut.as_mut().map(|s| &mut s.bn));
        v
    }
}

impl<T: Real> Layer<T> for ResidualBlock<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv1.forward(input)?;
        let h = self.bn1.forward(&h)?;
        let h = self.relu1.forward(&h)?;
        let h = self.conv2.forward(&h)?;
        let main = self.bn2.forward(&h)?;
        let skip = match &mut self.shortcut {
            Some(s) => {
                let p = s.conv.forward(input)?;
                s.bn.forward(&p)?
            }
            None => input.clone(),
        };
        let sum = main.add(&skip)?;
        let act = self.relu_out.forward(&sum)?;
        self.pool.forward(&act)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv1.infer(input)?;
        let h = self.bn1.infer(&h)?;
        let h = self.relu1.infer(&h)?;
        let h = self.conv2.infer(&h)?;
        let main = self.bn2.infer(&h)?;
        let skip = match &self.shortcut {
            Some(s) => s.bn.infer(&s.conv.infer(input)?)?,
            None => input.clone(),
        };
        let act = self.relu_out.infer(&main.add(&skip)?)?;
        self.pool.infer(&act)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.pool.backward(grad_out)?;
        let g_sum = self.relu_out.backward(&g)?;

        let g = self.bn2.backward(&g_sum)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        let g_main = self.conv1.backward(&g)?;

        let g_skip = match &mut self.shortcut {
            Some(s) => {
                let g = s.bn.backward(&g_sum)?;
                s.conv.backward(&g)?
            }
            None => g_sum,
        };
        g_main.add(&g_skip)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv1.params();
        v.extend(self.bn1.params());
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        if let Some(s) = &self.shortcut {
            v.extend(s.conv.params());
            v.extend(s.bn.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.bn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        if let Some(s) = &mut self.shortcut {
            v.extend(s.conv.params_mut());
            v.extend(s.bn.params_mut());
        }
        v
    }
}
