use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::{Graph, Scalar, Tensor};

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance over batch and time.
    pub var: Vec<T>,
    pub count: usize,
}

/// Running statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormState<T> {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    /// Exponential moving average update; the variance is stored unbiased.
    pub fn update(&mut self, stats: &BatchStats<T>) {
        let m = T::from_f64(self.momentum);
        let unbias = if stats.count > 1 {
            T::from_f64(stats.count as f64 / (stats.count - 1) as f64)
        } else {
            T::one()
        };
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * stats.var[c] * unbias;
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Batch normalization over the batch and time axes of `[N, C, L]`.
    ///
    /// In training mode batch statistics are used and returned so the caller can
    /// update `state`; in evaluation mode the running statistics are used.
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        state: &BatchNormState<T>,
        training: bool,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        if self.value(gamma).len() != c || self.value(beta).len() != c || state.running_mean.len() != c {
            return shape_err(format!("batchnorm parameters must have {c} channels"));
        }
        let eps = T::from_f64(state.eps);
        let count = n * len;
        let xd = x.data();
        let (mean, var) = if training {
            let cnt = T::from_f64(count as f64);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for b in 0..n {
                for ch in 0..c {
                    let row = &xd[(b * c + ch) * len..(b * c + ch + 1) * len];
                    mean[ch] += row.iter().copied().sum::<T>();
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / cnt);
            for b in 0..n {
                for ch in 0..c {
                    let row = &xd[(b * c + ch) * len..(b * c + ch + 1) * len];
                    var[ch] += row.iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum::<T>();
                }
            }
            var.iter_mut().for_each(|v| *v = *v / cnt);
            (mean, var)
        } else {
            (state.running_mean.clone(), state.running_var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * len;
                for t in off..off + len {
                    xhat[t] = (xd[t] - mean[ch]) * inv_std[ch];
                    out[t] = gd[ch] * xhat[t] + bd[ch];
                }
            }
        }
        let y = Tensor::new(x.shape().to_vec(), out)?;
        let req = self.requires(input) || self.requires(gamma) || self.requires(beta);
        let stats = training.then(|| BatchStats { mean, var, count });
        let v = self.push(
            y,
            req,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
        );
        Ok((v, stats))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_backward<T: Scalar>(
    input: Var,
    gamma: Var,
    beta: Var,
    xhat: &[T],
    inv_std: &[T],
    training: bool,
    dy: &[T],
    bp: &mut Backprop<'_, T>,
) {
    let values = bp.values;
    let (n, c, len) = values[input.0].dims3().expect("validated");
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * len;
            for t in off..off + len {
                sum_dy[ch] += dy[t];
                sum_dy_xhat[ch] += dy[t] * xhat[t];
            }
        }
    }
    if let Some(dg) = bp.grad(gamma) {
        dg.iter_mut().zip(&sum_dy_xhat).for_each(|(d, &s)| *d += s);
    }
    if let Some(db) = bp.grad(beta) {
        db.iter_mut().zip(&sum_dy).for_each(|(d, &s)| *d += s);
    }
    let gd = values[gamma.0].data();
    let Some(dx) = bp.grad(input) else { return };
    let m = T::from_f64((n * len) as f64);
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * len;
            let k = gd[ch] * inv_std[ch];
            for t in off..off + len {
                dx[t] += if training {
                    k * (dy[t] - sum_dy[ch] / m - xhat[t] * sum_dy_xhat[ch] / m)
                } else {
                    k * dy[t]
                };
            }
        }
    }
}
