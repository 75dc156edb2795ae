//! The gaze network and its ablation variants.
//!
//! Layer order:
//!
//! 1. input `[B, channels, timesteps, 1]`
//! 2. spatial filter (optional): `spatial_filters` kernels of `channels × 1 × 1`, BN, ReLU
//! 3. one [`ResidualBlock`] per entry of `block_widths`, each halving y
//! 4. flatten, depth-major then y
//! 5. linear to `fc_width`, ReLU
//! 6. linear to 2 outputs (gaze x, y)
//!
//! # Parameter order
//!
//! [`Model::params`] yields parameters in this fixed order, which is also the
//! checkpoint order: `spatial.conv.weight`, `[spatial.conv.bias]`,
//! `spatial.bn.gamma`, `spatial.bn.beta`; then for each block `i`:
//! `block{i}.conv1.weight`, `[bias]`, `block{i}.bn1.gamma`, `.beta`,
//! `block{i}.conv2.weight`, `[bias]`, `block{i}.bn2.gamma`, `.beta`, and if
//! the block projects its shortcut `block{i}.shortcut.conv.weight`, `[bias]`,
//! `block{i}.shortcut.bn.gamma`, `.beta`; finally `fc1.weight`, `fc1.bias`,
//! `fc2.weight`, `fc2.bias`. Running statistics ([`Model::running_stats`])
//! follow the same batch-norm order, mean before variance.

mod block;
pub mod checkpoint;
mod config;

pub use block::{ResidualBlock, Shortcut};
pub use config::{param_count, ModelConfig, Variant, TEMPORAL_KERNEL};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Layer, Linear, Mode, Param, Relu};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Real, Tensor};

/// Spatial filtering stage: a 1×1 convolution mixing all EEG channels at each
/// timestamp, followed by BN and ReLU.
#[derive(Debug, Clone)]
pub struct SpatialFilter<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
}

impl<T: Real> SpatialFilter<T> {
    pub fn new(channels: usize, filters: usize, conv_bias: bool) -> Result<Self> {
        Ok(SpatialFilter {
            conv: Conv2d::same("spatial.conv", channels, filters, 1, conv_bias)?,
            bn: BatchNorm2d::new("spatial.bn", filters)?,
            relu: Relu::new(),
        })
    }
}

impl<T: Real> Layer<T> for SpatialFilter<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.conv.forward(input)?;
        let h = self.bn.forward(&h)?;
        self.relu.forward(&h)
    }

    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.relu.infer(&self.bn.infer(&self.conv.infer(input)?)?)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.relu.backward(grad_out)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv.params();
        v.extend(self.bn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv.params_mut();
        v.extend(self.bn.params_mut());
        v
    }
}

/// Samples pushed through the convolutional stages together during inference.
/// Larger chunks measured slower: their activations spill out of L2.
pub const INFER_CHUNK: usize = 1;

/// Intermediate activations reported by [`Model::infer_observed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Spatial,
    Block(usize),
    Flatten,
    Hidden,
    Output,
}

/// Parameters, batch-norm running statistics and configuration of one network.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    pub spatial: Option<SpatialFilter<T>>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub fc1: Linear<T>,
    fc_relu: Relu<T>,
    pub fc2: Linear<T>,
    flat_dims: Option<Vec<usize>>,
}

impl<T: Real> Model<T> {
    /// Network with zero weights and fresh batch norms.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let spatial = if config.use_spatial {
            Some(SpatialFilter::new(config.channels, config.spatial_filters, config.conv_bias)?)
        } else {
            None
        };
        let mut depth = config.stem_depth();
        let mut blocks = Vec::with_capacity(config.block_widths.len());
        for (i, &w) in config.block_widths.iter().enumerate() {
            blocks.push(ResidualBlock::new(&format!("block{i}"), depth, w, config.equal_convs, config.conv_bias)?);
            depth = w;
        }
        let fc1 = Linear::new("fc1", config.flatten_len(), config.fc_width)?;
        let fc2 = Linear::new("fc2", config.fc_width, config.outputs)?;
        Ok(Model { config, spatial, blocks, fc1, fc_relu: Relu::new(), fc2, flat_dims: None })
    }

    /// He-initialized network; the same `(config, seed)` always gives
    /// bit-identical parameters.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::new(config)?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        if let Some(s) = &mut m.spatial {
            s.conv.init_he(&mut rng);
        }
        for b in &mut m.blocks {
            b.init_he(&mut rng);
        }
        m.fc1.init_he(&mut rng);
        m.fc2.init_he(&mut rng);
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.tensor.len()).sum()
    }

    /// Forward pass. `Train` uses batch statistics, updates running
    /// statistics and caches activations for [`Layer::backward`]; `Infer`
    /// is pure.
    pub fn run(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Train => self.forward(input),
            Mode::Infer => self.infer(input),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        match *input.dims() {
            [b, c, y, 1] if c == self.config.channels && y == self.config.timesteps => Ok(b),
            _ => Err(Error::ShapeMismatch {
                op: "model input",
                left: vec![0, self.config.channels, self.config.timesteps, 1],
                right: input.dims().to_vec(),
            }),
        }
    }

    /// Inference forward that reports every stage's activation to `observe`.
    pub fn infer_observed(&self, input: &Tensor<T>, observe: &mut dyn FnMut(Stage, &Tensor<T>)) -> Result<Tensor<T>> {
        let b = self.check_input(input)?;
        observe(Stage::Input, input);
        let mut h = match &self.spatial {
            Some(s) => {
                let h = s.infer(input)?;
                observe(Stage::Spatial, &h);
                h
            }
            None => input.clone(),
        };
        for (i, blk) in self.blocks.iter().enumerate() {
            h = blk.infer(&h)?;
            observe(Stage::Block(i), &h);
        }
        let flat = h.reshape(&[b, self.config.flatten_len()])?;
        observe(Stage::Flatten, &flat);
        let hidden = self.fc_relu.infer(&self.fc1.infer(&flat)?)?;
        observe(Stage::Hidden, &hidden);
        let out = self.fc2.infer(&hidden)?;
        observe(Stage::Output, &out);
        out.check_finite("model output")?;
        Ok(out)
    }

    pub fn batch_norms(&self) -> Vec<&BatchNorm2d<T>> {
        let mut v: Vec<&BatchNorm2d<T>> = self.spatial.iter().map(|s| &s.bn).collect();
        for b in &self.blocks {
            v.extend(b.batch_norms());
        }
        v
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        let mut v: Vec<&mut BatchNorm2d<T>> = self.spatial.iter_mut().map(|s| &mut s.bn).collect();
        for b in &mut self.blocks {
            v.extend(b.batch_norms_mut());
        }
        v
    }

    /// Running mean and variance of every batch norm, in parameter order.
    pub fn running_stats(&self) -> Vec<&Tensor<T>> {
        self.batch_norms().into_iter().flat_map(|bn| [&bn.running_mean, &bn.running_var]).collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.batch_norms_mut()
            .into_iter()
            .flat_map(|bn| [&mut bn.running_mean, &mut bn.running_var])
            .collect()
    }

    pub fn clear_grads(&mut self) {
        for p in self.params_mut() {
            p.tensor.clear_grad();
        }
    }
}

impl<T: Real> Layer<T> for Model<T> {
    fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_input(input)?;
        let mut h = match &mut self.spatial {
            Some(s) => s.forward(input)?,
            None => input.clone(),
        };
        for blk in &mut self.blocks {
            h = blk.forward(&h)?;
        }
        self.flat_dims = Some(h.dims().to_vec());
        let flat = h.reshape(&[b, self.config.flatten_len()])?;
        let hidden = self.fc1.forward(&flat)?;
        let hidden = self.fc_relu.forward(&hidden)?;
        let out = self.fc2.forward(&hidden)?;
        out.check_finite("model output")?;
        Ok(out)
    }

    /// Runs the convolutional stages on chunks of [`INFER_CHUNK`] samples so
    /// their activations stay in cache, then the dense head on the whole
    /// batch so each weight row is read once per batch. Every infer-mode
    /// stage is per-sample, so the result equals [`Model::infer_observed`]
    /// bit for bit.
    fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_input(input)?;
        let (c, y) = (self.config.channels, self.config.timesteps);
        let mut flat = Vec::with_capacity(b * self.config.flatten_len());
        for chunk in input.values().chunks(INFER_CHUNK * c * y) {
            let mut h = Tensor::from_vec(&[chunk.len() / (c * y), c, y, 1], chunk.to_vec())?;
            if let Some(s) = &self.spatial {
                h = s.infer(&h)?;
            }
            for blk in &self.blocks {
                h = blk.infer(&h)?;
            }
            flat.extend_from_slice(h.values());
        }
        let flat = Tensor::from_vec(&[b, self.config.flatten_len()], flat)?;
        let out = self.fc2.infer(&self.fc_relu.infer(&self.fc1.infer(&flat)?)?)?;
        out.check_finite("model output")?;
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let flat_dims = self.flat_dims.take().ok_or(Error::MissingCache("model"))?;
        let g = self.fc2.backward(grad_out)?;
        let g = self.fc_relu.backward(&g)?;
        let g = self.fc1.backward(&g)?;
        let mut g = g.reshape(&flat_dims)?;
        for blk in self.blocks.iter_mut().rev() {
            g = blk.backward(&g)?;
        }
        match &mut self.spatial {
            Some(s) => s.backward(&g),
            None => Ok(g),
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.spatial.as_ref().map(|s| s.params()).unwrap_or_default();
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.spatial.as_mut().map(|s| s.params_mut()).unwrap_or_default();
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }
}
