//! Distillation objective: soft-target cross-entropy at temperature `τ` plus
//! `λ` times hard-label cross-entropy at temperature 1, optionally scaled per
//! sample by its significance.

use crate::engine::loss::{check_tau, cross_entropy_logit_grad, cross_entropy_row, one_hot, softmax_row};
use crate::engine::{EngineError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub tau: f64,
    pub lambda: f64,
    /// Multiply the soft-target term by `τ²`. Off by default.
    pub tau_squared: bool,
}

impl LossTerms {
    pub fn validate(&self) -> Result<(), EngineError> {
        check_tau(self.tau)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(EngineError::InvalidParameter(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    fn kd_scale(&self) -> f64 {
        if self.tau_squared {
            self.tau * self.tau
        } else {
            1.0
        }
    }

    /// Loss and logit gradient for one sample, unweighted.
    pub(crate) fn sample(&self, soft_targets: &[f64], student_logits: &[f64], label: usize) -> (f64, Vec<f64>) {
        let classes = student_logits.len();
        let soft = softmax_row(student_logits, self.tau);
        let hard = softmax_row(student_logits, 1.0);
        let target = one_hot(label, classes);
        let kd = self.kd_scale();
        let loss = kd * cross_entropy_row(soft_targets, &soft)
            + self.lambda * cross_entropy_row(&target, &hard);
        let g_soft = cross_entropy_logit_grad(soft_targets, &soft, self.tau);
        let g_hard = cross_entropy_logit_grad(&target, &hard, 1.0);
        let grad = g_soft
            .iter()
            .zip(&g_hard)
            .map(|(s, h)| kd * s + self.lambda * h)
            .collect();
        (loss, grad)
    }
}

/// Batch loss and `∂L/∂z_S`.
///
/// Sample `i` contributes `weights[i] * ℓ_i` when `contributing[i]`; the sum
/// is divided by the number of contributing samples. With no contributing
/// sample the loss is zero.
pub fn distill_loss_and_grad(
    teacher_logits: &Tensor,
    student_logits: &Tensor,
    labels: &[usize],
    terms: &LossTerms,
    weights: &[f64],
    contributing: &[bool],
) -> Result<(f64, Tensor), EngineError> {
    terms.validate()?;
    if teacher_logits.shape() != student_logits.shape() || student_logits.shape().len() != 2 {
        return Err(EngineError::LengthMismatch {
            left: teacher_logits.shape().to_vec(),
            right: student_logits.shape().to_vec(),
        });
    }
    let b = student_logits.rows();
    if labels.len() != b || weights.len() != b || contributing.len() != b {
        return Err(EngineError::LengthMismatch {
            left: vec![b],
            right: vec![labels.len(), weights.len(), contributing.len()],
        });
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(EngineError::InvalidParameter(format!(
            "significance weight {w} outside [0, 1]"
        )));
    }
    let n = contributing.iter().filter(|&&c| c).count();
    let mut grad = Tensor::zeros(student_logits.shape());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = n as f64;
    let mut total = 0.0;
    for r in (0..b).filter(|&r| contributing[r]) {
        let targets = softmax_row(teacher_logits.row(r), terms.tau);
        let (loss, g) = terms.sample(&targets, student_logits.row(r), labels[r]);
        total += weights[r] * loss;
        for (out, v) in grad.row_mut(r).iter_mut().zip(g) {
            *out = weights[r] * v / scale;
        }
    }
    Ok((total / scale, grad))
}

/// Batch-mean distillation loss over all samples. `significance = None`
/// is the unweighted objective.
pub fn distill_loss(
    teacher_logits: &Tensor,
    student_logits: &Tensor,
    labels: &[usize],
    terms: &LossTerms,
    significance: Option<&[f64]>,
) -> Result<f64, EngineError> {
    let b = student_logits.rows();
    let ones = vec![1.0; b];
    let weights = significance.unwrap_or(&ones);
    distill_loss_and_grad(teacher_logits, student_logits, labels, terms, weights, &vec![true; b])
        .map(|(l, _)| l)
}

/// Hard-label cross-entropy at temperature 1 over contributing samples.
pub fn hard_loss_and_grad(
    logits: &Tensor,
    labels: &[usize],
    contributing: &[bool],
) -> Result<(f64, Tensor), EngineError> {
    let b = logits.rows();
    if labels.len() != b || contributing.len() != b {
        return Err(EngineError::LengthMismatch {
            left: vec![b],
            right: vec![labels.len(), contributing.len()],
        });
    }
    let n = contributing.iter().filter(|&&c| c).count();
    let mut grad = Tensor::zeros(logits.shape());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let classes = logits.row_len();
    let mut total = 0.0;
    for r in (0..b).filter(|&r| contributing[r]) {
        let p = softmax_row(logits.row(r), 1.0);
        let target = one_hot(labels[r], classes);
        total += cross_entropy_row(&target, &p);
        let g = cross_entropy_logit_grad(&target, &p, 1.0);
        for (out, v) in grad.row_mut(r).iter_mut().zip(g) {
            *out = v / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}
