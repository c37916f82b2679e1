//! Scalar losses over network outputs and their gradients w.r.t. those outputs.

use super::dist::log_softmax;
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// A differentiable loss over a batch of network outputs (logits or values).
/// Every head averages over the batch.
#[derive(Debug, Clone, Copy)]
pub enum LossHead<'a> {
    /// `-mean(log π(a|o) · A)`
    LogProbAdvantage {
        actions: &'a [usize],
        advantages: &'a [f64],
    },
    /// `-mean(min(ρ·A, clip(ρ, 1-ε, 1+ε)·A))`, `ρ = exp(log π(a|o) - old)`.
    ClippedSurrogate {
        actions: &'a [usize],
        old_log_probs: &'a [f64],
        advantages: &'a [f64],
        clip_ratio: f64,
    },
    /// `-mean(H(π(·|o)))`
    NegEntropy,
    /// `mean((v - target)²)`
    ValueMse { targets: &'a [f64] },
}

impl LossHead<'_> {
    fn check_len(&self, batch: usize) -> Result<()> {
        let len = match self {
            LossHead::LogProbAdvantage {
                actions,
                advantages,
            } => {
                check(actions.len(), advantages.len())?;
                actions.len()
            }
            LossHead::ClippedSurrogate {
                actions,
                old_log_probs,
                advantages,
                ..
            } => {
                check(actions.len(), advantages.len())?;
                check(actions.len(), old_log_probs.len())?;
                actions.len()
            }
            LossHead::NegEntropy => batch,
            LossHead::ValueMse { targets } => targets.len(),
        };
        check(batch, len)?;
        if batch == 0 {
            return Err(Error::Empty("loss batch"));
        }
        Ok(())
    }

    /// Loss value and `∂loss/∂outputs`.
    pub fn evaluate(&self, outputs: &Matrix) -> Result<(f64, Matrix)> {
        let batch = outputs.rows();
        self.check_len(batch)?;
        let k = outputs.cols();
        let inv_b = 1.0 / batch as f64;
        let mut grad = Matrix::zeros(batch, k);
        let mut loss = 0.0;
        match *self {
            LossHead::LogProbAdvantage {
                actions,
                advantages,
            } => {
                for b in 0..batch {
                    let lp = log_softmax(outputs.row(b));
                    let (a, adv) = (actions[b], advantages[b]);
                    loss -= lp[a] * adv * inv_b;
                    dlogp_dlogits(&lp, a, -adv * inv_b, grad.row_mut(b));
                }
            }
            LossHead::ClippedSurrogate {
                actions,
                old_log_probs,
                advantages,
                clip_ratio,
            } => {
                for b in 0..batch {
                    let lp = log_softmax(outputs.row(b));
                    let (a, adv) = (actions[b], advantages[b]);
                    let ratio = (lp[a] - old_log_probs[b]).exp();
                    let unclipped = ratio * adv;
                    let clipped = ratio.clamp(1.0 - clip_ratio, 1.0 + clip_ratio) * adv;
                    loss -= unclipped.min(clipped) * inv_b;
                    if unclipped <= clipped {
                        dlogp_dlogits(&lp, a, -adv * ratio * inv_b, grad.row_mut(b));
                    }
                }
            }
            LossHead::NegEntropy => {
                for b in 0..batch {
                    let lp = log_softmax(outputs.row(b));
                    let h: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                    loss -= h * inv_b;
                    // ∂H/∂z_k = -p_k (log p_k + H)
                    for (g, l) in grad.row_mut(b).iter_mut().zip(&lp) {
                        *g = l.exp() * (l + h) * inv_b;
                    }
                }
            }
            LossHead::ValueMse { targets } => {
                for b in 0..batch {
                    let diff = outputs.row(b)[0] - targets[b];
                    loss += diff * diff * inv_b;
                    grad.row_mut(b)[0] = 2.0 * diff * inv_b;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok((loss, grad))
    }
}

/// Adds `scale · ∂log p_a/∂z` (= `scale · (δ_ak - p_k)`) into `out`.
fn dlogp_dlogits(log_probs: &[f64], a: usize, scale: f64, out: &mut [f64]) {
    for (k, (o, l)) in out.iter_mut().zip(log_probs).enumerate() {
        let delta = if k == a { 1.0 } else { 0.0 };
        *o += scale * (delta - l.exp());
    }
}

fn check(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
