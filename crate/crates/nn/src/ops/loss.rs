//! Segmentation and classification losses.
//!
//! The focal loss is `-(1/N) sum_n (1 - p_n)^gamma * log p_n` where `p_n` is the
//! predicted probability of the true class at time stamp `n`. With `gamma = 0`
//! it reduces to cross-entropy.

use super::activation::softmax_channels;
use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::{Graph, Scalar, Tensor};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_EPS: f64 = 1e-12;

/// Focusing exponent and segmentation/classification trade-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma: 1.0, alpha: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.alpha >= 0.0) {
            return shape_err(format!("loss config needs gamma >= 0 and alpha >= 0, got {self:?}"));
        }
        Ok(())
    }
}

fn focal_term(p: f64, gamma: f64) -> f64 {
    -(1.0 - p).powf(gamma) * p.max(PROB_EPS).ln()
}

/// Focal loss of a `[C, L]` / `[N, C, L]` probability tensor against per-sample class ids.
pub fn focal_loss<T: Scalar>(probs: &Tensor<T>, labels: &[u8], gamma: f64) -> Result<f64> {
    let (n, c, len) = probs.dims3()?;
    if labels.len() != n * len {
        return shape_err(format!("expected {} labels, got {}", n * len, labels.len()));
    }
    let d = probs.data();
    let mut total = 0.0;
    for b in 0..n {
        for t in 0..len {
            let y = labels[b * len + t] as usize;
            if y >= c {
                return shape_err(format!("label {y} out of range for {c} classes"));
            }
            total += focal_term(d[(b * c + y) * len + t].to_f64(), gamma);
        }
    }
    Ok(total / (n * len) as f64)
}

/// Plain cross-entropy, `-(1/N) sum log p_n`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &[u8]) -> Result<f64> {
    let (n, c, len) = probs.dims3()?;
    if labels.len() != n * len {
        return shape_err(format!("expected {} labels, got {}", n * len, labels.len()));
    }
    let d = probs.data();
    let mut total = 0.0;
    for b in 0..n {
        for t in 0..len {
            let y = labels[b * len + t] as usize;
            if y >= c {
                return shape_err(format!("label {y} out of range for {c} classes"));
            }
            total -= d[(b * c + y) * len + t].to_f64().max(PROB_EPS).ln();
        }
    }
    Ok(total / (n * len) as f64)
}

/// Binary cross-entropy of a probability against a 0/1 target.
pub fn bce_loss(prob: f64, target: f64) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

pub fn total_loss(focal: f64, bce: f64, alpha: f64) -> f64 {
    focal + alpha * bce
}

impl<T: Scalar> Graph<T> {
    /// Focal loss computed from pre-softmax logits `[N, C, L]`; gradients flow to the logits.
    pub fn focal_loss_logits(&mut self, logits: Var, labels: &[u8], gamma: f64) -> Result<Var> {
        let z = self.value(logits);
        let (n, c, len) = z.dims3()?;
        if labels.len() != n * len || labels.iter().any(|&y| y as usize >= c) {
            return shape_err(format!("need {} labels in 0..{c}", n * len));
        }
        let probs = softmax_channels(z.data(), n, c, len);
        let mut total = 0.0;
        for b in 0..n {
            for t in 0..len {
                let y = labels[b * len + t] as usize;
                total += focal_term(probs[(b * c + y) * len + t].to_f64(), gamma);
            }
        }
        let value = Tensor::new(vec![1], vec![T::from_f64(total / (n * len) as f64)])?;
        let req = self.requires(logits);
        Ok(self.push(
            value,
            req,
            Op::FocalLogits {
                logits,
                labels: labels.to_vec(),
                gamma: T::from_f64(gamma),
            },
        ))
    }

    /// Mean cross-entropy of `[N, C]` logits over the examples that carry a target class.
    ///
    /// With two classes this is the binary cross-entropy of the class-0 probability.
    /// Examples with `None` are excluded; if none remain the loss is zero.
    pub fn cross_entropy_logits(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let z = self.value(logits);
        let &[n, c] = z.shape() else {
            return shape_err(format!("classifier logits must be [N, C], got {:?}", z.shape()));
        };
        if targets.len() != n || targets.iter().flatten().any(|&y| y >= c) {
            return shape_err(format!("need {n} targets in 0..{c}"));
        }
        let probs = softmax_rows(z.data(), c);
        let counted = targets.iter().flatten().count();
        let mut total = 0.0;
        for (b, y) in targets.iter().enumerate() {
            if let Some(y) = *y {
                total -= probs[b * c + y].to_f64().max(PROB_EPS).ln();
            }
        }
        let mean = if counted == 0 { 0.0 } else { total / counted as f64 };
        let value = Tensor::new(vec![1], vec![T::from_f64(mean)])?;
        let req = self.requires(logits) && counted > 0;
        Ok(self.push(
            value,
            req,
            Op::CrossEntropyLogits {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }
}

fn softmax_rows<T: Scalar>(z: &[T], c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(z.len());
    for row in z.chunks_exact(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let s: T = e.iter().copied().sum();
        out.extend(e.into_iter().map(|v| v / s));
    }
    out
}

pub(crate) fn focal_logits_backward<T: Scalar>(
    logits: Var,
    labels: &[u8],
    gamma: T,
    dy: &[T],
    bp: &mut Backprop<'_, T>,
) {
    let z = &bp.values[logits.0];
    let (n, c, len) = z.dims3().expect("validated");
    let probs = softmax_channels(z.data(), n, c, len);
    let gamma = gamma.to_f64();
    let scale = dy[0].to_f64() / (n * len) as f64;
    let Some(dz) = bp.grad(logits) else { return };
    for b in 0..n {
        for t in 0..len {
            let y = labels[b * len + t] as usize;
            let p = probs[(b * c + y) * len + t].to_f64();
            let clamped = p < PROB_EPS;
            let logp = p.max(PROB_EPS).ln();
            let q = 1.0 - p;
            // dL/dlog(p): the modulating factor contributes only for gamma > 0 and p < 1
            let mut d_logp = if gamma > 0.0 && q > 0.0 {
                gamma * q.powf(gamma - 1.0) * p * logp
            } else {
                0.0
            };
            if !clamped {
                d_logp -= q.powf(gamma);
            }
            let g = d_logp * scale;
            for ch in 0..c {
                let i = (b * c + ch) * len + t;
                let delta = if ch == y { 1.0 } else { 0.0 };
                dz[i] += T::from_f64(g * (delta - probs[i].to_f64()));
            }
        }
    }
}

pub(crate) fn cross_entropy_logits_backward<T: Scalar>(
    logits: Var,
    targets: &[Option<usize>],
    dy: &[T],
    bp: &mut Backprop<'_, T>,
) {
    let z = &bp.values[logits.0];
    let c = z.shape()[1];
    let probs = softmax_rows(z.data(), c);
    let counted = targets.iter().flatten().count();
    if counted == 0 {
        return;
    }
    let scale = dy[0] / T::from_f64(counted as f64);
    let Some(dz) = bp.grad(logits) else { return };
    for (b, y) in targets.iter().enumerate() {
        if let Some(y) = *y {
            for ch in 0..c {
                let delta = if ch == y { T::one() } else { T::zero() };
                dz[b * c + ch] += scale * (probs[b * c + ch] - delta);
            }
        }
    }
}
