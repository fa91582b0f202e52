use rand::Rng;

use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::{Graph, Scalar, Tensor};

/// Default negative slope of the leaky ReLU used throughout the network.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Channel-axis softmax of a `[N, C, L]` buffer, written in max-subtracted form.
pub fn softmax_channels<T: Scalar>(data: &[T], n: usize, c: usize, len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    let mut col = vec![T::zero(); c];
    for b in 0..n {
        let base = b * c * len;
        for t in 0..len {
            let mut max = T::neg_infinity();
            for ch in 0..c {
                col[ch] = data[base + ch * len + t];
                max = max.max(col[ch]);
            }
            let mut sum = T::zero();
            for v in col.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for ch in 0..c {
                out[base + ch * len + t] = col[ch] / sum;
            }
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    pub fn leaky_relu(&mut self, input: Var, slope: T) -> Var {
        let x = self.value(input);
        let y = x.map(|v| if v >= T::zero() { v } else { v * slope });
        let req = self.requires(input);
        self.push(y, req, Op::LeakyRelu { input, slope })
    }

    /// Softmax over the channel axis of `[N, C, L]`, `[C, L]`, or `[N, C]` (classifier logits).
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = softmax_dims(x.shape())?;
        let y = Tensor::new(x.shape().to_vec(), softmax_channels(x.data(), n, c, len))?;
        let req = self.requires(input);
        Ok(self.push(y, req, Op::Softmax { input }))
    }

    /// Inverted dropout: zeroes elements with probability `p` and rescales survivors.
    pub fn dropout<R: Rng + ?Sized>(&mut self, input: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return shape_err(format!("dropout probability must be in [0, 1), got {p}"));
        }
        let x = self.value(input);
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let y = Tensor::new(
            x.shape().to_vec(),
            x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
        )?;
        let req = self.requires(input);
        Ok(self.push(y, req, Op::Dropout { input, mask }))
    }
}

pub(crate) fn softmax_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, l] => Ok((1, c, l)),
        [n, c, l] => Ok((n, c, l)),
        _ => shape_err(format!("softmax expects 2-D or 3-D input, got {shape:?}")),
    }
}

pub(crate) fn leaky_relu_backward<T: Scalar>(input: Var, slope: T, dy: &[T], bp: &mut Backprop<'_, T>) {
    let values = bp.values;
    let Some(dx) = bp.grad(input) else { return };
    for ((d, &g), &x) in dx.iter_mut().zip(dy).zip(values[input.0].data()) {
        *d += if x >= T::zero() { g } else { g * slope };
    }
}

pub(crate) fn softmax_backward<T: Scalar>(input: Var, out: &Tensor<T>, dy: &[T], bp: &mut Backprop<'_, T>) {
    let (n, c, len) = softmax_dims(out.shape()).expect("validated");
    let Some(dx) = bp.grad(input) else { return };
    let y = out.data();
    for b in 0..n {
        let base = b * c * len;
        for t in 0..len {
            let dot: T = (0..c).map(|ch| dy[base + ch * len + t] * y[base + ch * len + t]).sum();
            for ch in 0..c {
                let i = base + ch * len + t;
                dx[i] += y[i] * (dy[i] - dot);
            }
        }
    }
}

pub(crate) fn dropout_backward<T: Scalar>(input: Var, mask: &[T], dy: &[T], bp: &mut Backprop<'_, T>) {
    let Some(dx) = bp.grad(input) else { return };
    for ((d, &g), &m) in dx.iter_mut().zip(dy).zip(mask) {
        *d += g * m;
    }
}
