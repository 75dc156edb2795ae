use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel height of the first convolution in every residual block (and of the
/// second one in the equal-convolution variant).
pub const TEMPORAL_KERNEL: usize = 9;

/// Architecture of the gaze network.
///
/// The defaults reproduce the reference network: 129 EEG channels × 500
/// samples, 16 spatial filters, residual blocks of width 32 and 64, a 256-unit
/// hidden layer and 2 outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub channels: usize,
    pub timesteps: usize,
    pub spatial_filters: usize,
    pub block_widths: Vec<usize>,
    pub fc_width: usize,
    pub outputs: usize,
    /// Spatial filtering layer (1×1 convolution over all channels + BN + ReLU).
    pub use_spatial: bool,
    /// Second residual convolution is 9×1 like the first instead of 1×1.
    pub equal_convs: bool,
    /// Bias terms on convolutions. Every convolution here feeds a batch norm,
    /// whose shift makes a bias redundant, so this defaults to off.
    pub conv_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            channels: 129,
            timesteps: 500,
            spatial_filters: 16,
            block_widths: vec![32, 64],
            fc_width: 256,
            outputs: 2,
            use_spatial: true,
            equal_convs: false,
            conv_bias: false,
        }
    }
}

/// The four architecture variants of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Base,
    NoSpatial,
    EqualConvs,
    NoSpatialEqualConvs,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::NoSpatial, Variant::EqualConvs, Variant::NoSpatialEqualConvs, Variant::Base];

    pub fn from_flags(use_spatial: bool, equal_convs: bool) -> Self {
        match (use_spatial, equal_convs) {
            (true, false) => Variant::Base,
            (false, false) => Variant::NoSpatial,
            (true, true) => Variant::EqualConvs,
            (false, true) => Variant::NoSpatialEqualConvs,
        }
    }

    pub fn use_spatial(self) -> bool {
        matches!(self, Variant::Base | Variant::EqualConvs)
    }

    pub fn equal_convs(self) -> bool {
        matches!(self, Variant::EqualConvs | Variant::NoSpatialEqualConvs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::NoSpatial => "no-spatial",
            Variant::EqualConvs => "equal-convs",
            Variant::NoSpatialEqualConvs => "no-spatial-equal-convs",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.use_spatial = variant.use_spatial();
        self.equal_convs = variant.equal_convs();
        self
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.use_spatial, self.equal_convs)
    }

    /// Small network used for whole-model gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            channels: 4,
            timesteps: 16,
            spatial_filters: 4,
            block_widths: vec![4, 8],
            fc_width: 8,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("model config: {msg}")));
        if self.channels == 0 || self.timesteps == 0 {
            return bad("channels and timesteps must be positive".into());
        }
        if self.block_widths.is_empty() || self.block_widths.contains(&0) {
            return bad(format!("block widths must be non-empty and positive, got {:?}", self.block_widths));
        }
        if self.use_spatial && self.spatial_filters == 0 {
            return bad("spatial_filters must be positive".into());
        }
        if self.fc_width == 0 {
            return bad("fc_width must be positive".into());
        }
        if self.outputs != 2 {
            return bad(format!("outputs must be 2 (gaze x, y), got {}", self.outputs));
        }
        if self.timesteps >> self.block_widths.len() == 0 {
            return bad(format!(
                "{} timesteps cannot be pooled by 2 through {} blocks",
                self.timesteps,
                self.block_widths.len()
            ));
        }
        Ok(())
    }

    /// Depth entering the first residual block.
    pub fn stem_depth(&self) -> usize {
        if self.use_spatial {
            self.spatial_filters
        } else {
            self.channels
        }
    }

    /// y-length after each residual block.
    pub fn block_lengths(&self) -> Vec<usize> {
        let mut y = self.timesteps;
        self.block_widths
            .iter()
            .map(|_| {
                y /= 2;
                y
            })
            .collect()
    }

    /// Length of the flattened feature vector fed to the first linear layer.
    pub fn flatten_len(&self) -> usize {
        let last_y = *self.block_lengths().last().expect("validated config has blocks");
        self.block_widths.last().copied().unwrap_or(0) * last_y
    }

    /// Errors unless this configuration is the given variant.
    pub fn ensure_variant(&self, variant: Variant) -> Result<()> {
        if self.variant() != variant {
            return Err(Error::ConfigMismatch(format!(
                "model is variant {}, run is configured for {variant}",
                self.variant()
            )));
        }
        Ok(())
    }

    /// Errors unless inputs of `channels × timesteps` fit this model.
    pub fn ensure_input(&self, channels: usize, timesteps: usize) -> Result<()> {
        if (channels, timesteps) != (self.channels, self.timesteps) {
            return Err(Error::ConfigMismatch(format!(
                "model expects {}x{} inputs, data is {channels}x{timesteps}",
                self.channels, self.timesteps
            )));
        }
        Ok(())
    }
}

/// Exact number of learnable scalars: convolution kernels (and biases when
/// enabled), batch-norm gamma and beta, linear weights and biases. Running
/// statistics are not counted.
pub fn param_count(config: &ModelConfig) -> usize {
    let conv = |cin: usize, cout: usize, ky: usize| cin * cout * ky + if config.conv_bias { cout } else { 0 };
    let bn = |c: usize| 2 * c;
    let mut total = 0;
    if config.use_spatial {
        total += conv(config.channels, config.spatial_filters, 1) + bn(config.spatial_filters);
    }
    let second_ky = if config.equal_convs { TEMPORAL_KERNEL } else { 1 };
    let mut depth = config.stem_depth();
    for &n in &config.block_widths {
        total += conv(depth, n, TEMPORAL_KERNEL) + bn(n);
        total += conv(n, n, second_ky) + bn(n);
        if depth != n {
            total += conv(depth, n, 1) + bn(n);
        }
        depth = n;
    }
    let flat = config.flatten_len();
    total += flat * config.fc_width + config.fc_width;
    total += config.fc_width * config.outputs + config.outputs;
    total
}
