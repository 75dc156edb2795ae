//! EEG-to-gaze regression from scratch.
//!
//! A small deep-learning stack for regressing a 2-D gaze position from a
//! multi-channel EEG window:
//!
//! - [`tensor`]: dense row-major arrays.
//! - [`nn`]: convolution, batch norm, ReLU, average pooling and fully
//!   connected layers with analytic gradients, plus finite-difference checks.
//! - [`model`]: the spatial-filter network with unequal-convolution residual
//!   blocks and its ablation variants, parameter accounting and checkpoints.
//! - [`optim`]: Adam with weight decay and the MSE loss.
//! - [`data`]: datasets, the binary dataset format, a synthetic generator and
//!   the split protocols.
//! - [`harness`]: training, evaluation, repeated runs and benchmarks.

mod codec;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, FormatError, Result};
pub use tensor::{Fill, Real, Shape, Tensor};
