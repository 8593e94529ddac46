//! Temperature softmax and cross-entropy with their logit gradients.

use super::{EngineError, Tensor};

/// Floor applied to predicted probabilities inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Softmax of a single logit row at temperature `tau`, max-subtracted.
pub fn softmax_row(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// Row-wise `softmax(logits / tau)` for a `[B, C]` tensor.
pub fn softmax_with_temperature(logits: &Tensor, tau: f64) -> Result<Tensor, EngineError> {
    check_tau(tau)?;
    if logits.shape().len() != 2 {
        return Err(EngineError::NotLogits(logits.shape().to_vec()));
    }
    let mut out = logits.clone();
    for r in 0..logits.rows() {
        let p = softmax_row(logits.row(r), tau);
        out.row_mut(r).copy_from_slice(&p);
    }
    Ok(out)
}

pub(crate) fn check_tau(tau: f64) -> Result<(), EngineError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EngineError::InvalidParameter(format!(
            "temperature must be positive and finite, got {tau}"
        )))
    }
}

/// `-Σ target·ln(max(pred, LOG_FLOOR))` for one row.
pub fn cross_entropy_row(target: &[f64], predicted: &[f64]) -> f64 {
    -target
        .iter()
        .zip(predicted)
        .filter(|(&t, _)| t != 0.0)
        .map(|(&t, &p)| t * p.max(LOG_FLOOR).ln())
        .sum::<f64>()
}

/// Batch-mean cross-entropy between target and predicted distributions.
pub fn cross_entropy(target: &Tensor, predicted: &Tensor) -> Result<f64, EngineError> {
    if target.shape() != predicted.shape() || target.shape().len() != 2 {
        return Err(EngineError::LengthMismatch {
            left: target.shape().to_vec(),
            right: predicted.shape().to_vec(),
        });
    }
    let b = target.rows();
    let total: f64 = (0..b)
        .map(|r| cross_entropy_row(target.row(r), predicted.row(r)))
        .sum();
    Ok(total / b as f64)
}

/// Gradient of `cross_entropy_row(target, softmax(z / tau))` with respect to
/// `z`, given `probs = softmax(z / tau)`. Entries whose probability sits under
/// the log floor contribute a constant and are excluded from the derivative.
pub fn cross_entropy_logit_grad(target: &[f64], probs: &[f64], tau: f64) -> Vec<f64> {
    let live_mass: f64 = target
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p >= LOG_FLOOR)
        .map(|(&t, _)| t)
        .sum();
    target
        .iter()
        .zip(probs)
        .map(|(&t, &p)| {
            let t_live = if p >= LOG_FLOOR { t } else { 0.0 };
            (p * live_mass - t_live) / tau
        })
        .collect()
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}
