//! Adam with weight decay, and the mean-squared-error loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Param, ParamRole};
use crate::tensor::{Real, Tensor};

/// Which parameters receive weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayScope {
    /// Convolution kernels and linear weight matrices only.
    WeightsOnly,
    All,
}

/// Learning rate as a function of the (1-based) epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Multiply by `factor` every `every` epochs.
    Step { every: usize, factor: f64 },
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { every, factor } => base * factor.powi((epoch.saturating_sub(1) / every.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    /// `false`: decay is added to the gradient before the moment updates (L2).
    /// `true`: decay is applied directly to the parameter (AdamW style).
    pub decoupled: bool,
    pub decay_scope: DecayScope,
    pub schedule: LrSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 5e-4,
            epsilon: 1e-8,
            decoupled: false,
            decay_scope: DecayScope::WeightsOnly,
            schedule: LrSchedule::Constant,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.weight_decay >= 0.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam config {self:?}")))
        }
    }

    fn decays(&self, role: ParamRole) -> bool {
        self.weight_decay > 0.0
            && match self.decay_scope {
                DecayScope::All => true,
                DecayScope::WeightsOnly => role == ParamRole::Weight,
            }
    }
}

/// First and second moment estimates per parameter, plus the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    moments: Vec<(Vec<T>, Vec<T>)>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        AdamState { moments: Vec::new(), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> Option<&[T]> {
        self.moments.get(i).map(|m| m.0.as_slice())
    }

    pub fn second_moment(&self, i: usize) -> Option<&[T]> {
        self.moments.get(i).map(|m| m.1.as_slice())
    }
}

/// One Adam update of `params` at learning rate `lr` (the schedule is applied
/// by the caller).
///
/// For each parameter `p` with gradient `g` (coupled decay):
///
/// ```text
/// g' = g + wd·p
/// m  = β1·m + (1-β1)·g'          v = β2·v + (1-β2)·g'²
/// m̂  = m / (1-β1^t)              v̂ = v / (1-β2^t)
/// p  = p - lr·m̂ / (√v̂ + ε)
/// ```
pub fn adam_step<T: Real>(params: Vec<&mut Param<T>>, state: &mut AdamState<T>, cfg: &AdamConfig, lr: f64) -> Result<()> {
    if state.moments.is_empty() {
        state.moments = params.iter().map(|p| (vec![T::zero(); p.tensor.len()], vec![T::zero(); p.tensor.len()])).collect();
    }
    if state.moments.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "optimizer tracks {} parameters, got {}",
            state.moments.len(),
            params.len()
        )));
    }
    if let Some(p) = params.iter().find(|p| p.tensor.grad().is_none()) {
        return Err(Error::MissingGrad(p.name.clone()));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::cast(cfg.beta1), T::cast(cfg.beta2));
    let (one_b1, one_b2) = (T::cast(1.0 - cfg.beta1), T::cast(1.0 - cfg.beta2));
    let (inv_bc1, inv_bc2) = (T::cast(1.0 / bc1), T::cast(1.0 / bc2));
    let (lr_t, eps) = (T::cast(lr), T::cast(cfg.epsilon));

    for (p, (m, v)) in params.into_iter().zip(&mut state.moments) {
        if m.len() != p.tensor.len() {
            return Err(Error::ShapeMismatch { op: "adam_step", left: vec![m.len()], right: p.tensor.dims().to_vec() });
        }
        let decay = cfg.decays(p.role);
        let wd = T::cast(cfg.weight_decay);
        let coupled = decay && !cfg.decoupled;
        let decoupled = decay && cfg.decoupled;
        let (values, grad) = p.tensor.values_and_grad_mut();
        let grad = grad.expect("checked above");
        for i in 0..values.len() {
            let g = if coupled { grad[i] + wd * values[i] } else { grad[i] };
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            let m_hat = m[i] * inv_bc1;
            let v_hat = v[i] * inv_bc2;
            let mut next = values[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            if decoupled {
                next = next - lr_t * wd * values[i];
            }
            values[i] = next;
        }
        if !values.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {} after Adam step {}", p.name, state.step)));
        }
    }
    Ok(())
}

/// Mean over all entries of `(pred - target)²` and its gradient
/// `2·(pred - target) / len`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch { op: "mse_loss", left: pred.dims().to_vec(), right: target.dims().to_vec() });
    }
    let n = pred.len() as f64;
    let diff = pred.sub(target)?;
    let loss = diff.values().iter().map(|d| d.to_f64_lossy().powi(2)).sum::<f64>() / n;
    Ok((loss, diff.scale(T::cast(2.0 / n))))
}
