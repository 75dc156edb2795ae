//! Central finite-difference checks of analytic backward passes.

use rand::Rng;

use super::Layer;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

/// Seed of the probe coefficients used by [`gradcheck`].
pub const PROBE_SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)` over all entries.
    pub max_rel_error: f64,
    /// Which entry produced the maximum, e.g. `input[3]` or `fc.weight[17]`.
    pub worst: String,
    pub entries_checked: usize,
}

/// Gradient check with a fixed random linear probe `loss = Σ c_i · out_i`,
/// coefficients uniform on `[-1, 1)`.
pub fn gradcheck<L: Layer<f64>>(layer: &mut L, input: &Tensor<f64>, eps: f64) -> Result<GradCheckReport> {
    let mut coeffs: Option<Tensor<f64>> = None;
    gradcheck_with(layer, input, eps, |out| {
        let c = coeffs.get_or_insert_with(|| {
            let mut rng = stream_rng(PROBE_SEED, Stream::Probe, 0);
            let v = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            Tensor::from_vec(out.dims(), v).expect("probe shape")
        });
        let loss = out.values().iter().zip(c.values()).map(|(o, k)| o * k).sum();
        (loss, c.clone())
    })
}

/// Gradient check against an arbitrary scalar probe returning `(loss, dloss/dout)`.
///
/// Every parameter entry and every input entry is perturbed by `±eps`; the
/// layer runs in train mode throughout.
pub fn gradcheck_with<L, P>(layer: &mut L, input: &Tensor<f64>, eps: f64, mut probe: P) -> Result<GradCheckReport>
where
    L: Layer<f64>,
    P: FnMut(&Tensor<f64>) -> (f64, Tensor<f64>),
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let out = layer.forward(input)?;
    out.check_finite("gradcheck forward")?;
    let (_, grad_out) = probe(&out);
    let grad_in = layer.backward(&grad_out)?;

    let analytic_params: Vec<(String, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| {
            let g = p.tensor.grad().ok_or_else(|| Error::MissingGrad(p.name.clone()))?;
            Ok((p.name.clone(), g.to_vec()))
        })
        .collect::<Result<_>>()?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), entries_checked: 0 };
    let mut record = |name: &str, idx: usize, analytic: f64, numeric: f64| -> Result<()> {
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(Error::NonFinite(format!("gradcheck {name}[{idx}]")));
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        report.entries_checked += 1;
        if rel > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = format!("{name}[{idx}]");
        }
        Ok(())
    };

    let mut loss_at = |layer: &mut L, x: &Tensor<f64>| -> Result<f64> {
        let out = layer.forward(x)?;
        Ok(probe(&out).0)
    };

    for (pi, (name, analytic)) in analytic_params.iter().enumerate() {
        for (i, &a) in analytic.iter().enumerate() {
            let orig = layer.params()[pi].tensor.values()[i];
            layer.params_mut()[pi].tensor.values_mut()[i] = orig + eps;
            let plus = loss_at(layer, input)?;
            layer.params_mut()[pi].tensor.values_mut()[i] = orig - eps;
            let minus = loss_at(layer, input)?;
            layer.params_mut()[pi].tensor.values_mut()[i] = orig;
            record(name, i, a, (plus - minus) / (2.0 * eps))?;
        }
    }

    let mut x = input.clone();
    for (i, &a) in grad_in.values().iter().enumerate() {
        let orig = x.values()[i];
        x.values_mut()[i] = orig + eps;
        let plus = loss_at(layer, &x)?;
        x.values_mut()[i] = orig - eps;
        let minus = loss_at(layer, &x)?;
        x.values_mut()[i] = orig;
        record("input", i, a, (plus - minus) / (2.0 * eps))?;
    }

    Ok(report)
}
