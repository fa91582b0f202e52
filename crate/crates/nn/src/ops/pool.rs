use super::conv::shape_like;
use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::{Graph, Scalar, Tensor};

/// Source position and blend weight for linear upsampling (half-pixel centres, edge clamped).
fn upsample_taps(i: usize, factor: usize, len: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f64)
}

impl<T: Scalar> Graph<T> {
    /// Non-overlapping max pooling along time; a trailing partial window is dropped.
    /// Ties route the gradient to the leftmost maximum.
    pub fn maxpool1d(&mut self, input: Var, factor: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        if factor == 0 || len < factor {
            return shape_err(format!("maxpool factor {factor} needs at least {factor} samples, got {len}"));
        }
        let l_out = len / factor;
        let mut out = Vec::with_capacity(n * c * l_out);
        let mut argmax = Vec::with_capacity(n * c * l_out);
        for row in x.data().chunks_exact(len) {
            for j in 0..l_out {
                let base = j * factor;
                let mut best = base;
                for s in base + 1..base + factor {
                    if row[s] > row[best] {
                        best = s;
                    }
                }
                out.push(row[best]);
                argmax.push(best as u32);
            }
        }
        let shape = shape_like(x.shape(), n, c, l_out);
        let req = self.requires(input);
        Ok(self.push(Tensor::new(shape, out)?, req, Op::MaxPool { input, argmax }))
    }

    /// Average pooling to exactly `target_len` samples; `target_len` must divide the length.
    pub fn avgpool1d(&mut self, input: Var, target_len: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        if target_len == 0 || len % target_len != 0 {
            return shape_err(format!("avgpool target {target_len} does not divide length {len}"));
        }
        let window = len / target_len;
        let scale = T::one() / T::from_f64(window as f64);
        let out: Vec<T> = x
            .data()
            .chunks_exact(window)
            .map(|w| w.iter().copied().sum::<T>() * scale)
            .collect();
        let shape = shape_like(x.shape(), n, c, target_len);
        let req = self.requires(input);
        Ok(self.push(Tensor::new(shape, out)?, req, Op::AvgPool { input, window }))
    }

    /// Linear interpolation upsampling by an integer factor.
    ///
    /// Output sample `i` reads the input at position `(i + 0.5) / factor - 0.5`,
    /// clamped to the valid range.
    pub fn upsample_linear(&mut self, input: Var, factor: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        if factor == 0 {
            return shape_err("upsample factor must be positive");
        }
        let l_out = len * factor;
        let taps: Vec<_> = (0..l_out).map(|i| upsample_taps(i, factor, len)).collect();
        let mut out = Vec::with_capacity(n * c * l_out);
        for row in x.data().chunks_exact(len) {
            for &(i0, i1, frac) in &taps {
                let f = T::from_f64(frac);
                out.push(row[i0] * (T::one() - f) + row[i1] * f);
            }
        }
        let shape = shape_like(x.shape(), n, c, l_out);
        let req = self.requires(input);
        Ok(self.push(Tensor::new(shape, out)?, req, Op::Upsample { input, factor }))
    }
}

pub(crate) fn maxpool_backward<T: Scalar>(input: Var, argmax: &[u32], dy: &[T], bp: &mut Backprop<'_, T>) {
    let len = bp.values[input.0].dims3().expect("validated").2;
    let Some(dx) = bp.grad(input) else { return };
    let l_out = argmax.len() / (dx.len() / len);
    for (r, (g_row, a_row)) in dy.chunks_exact(l_out).zip(argmax.chunks_exact(l_out)).enumerate() {
        for (&g, &a) in g_row.iter().zip(a_row) {
            dx[r * len + a as usize] += g;
        }
    }
}

pub(crate) fn avgpool_backward<T: Scalar>(input: Var, window: usize, dy: &[T], bp: &mut Backprop<'_, T>) {
    let Some(dx) = bp.grad(input) else { return };
    let scale = T::one() / T::from_f64(window as f64);
    for (chunk, &g) in dx.chunks_exact_mut(window).zip(dy) {
        chunk.iter_mut().for_each(|d| *d += g * scale);
    }
}

pub(crate) fn upsample_backward<T: Scalar>(
    input: Var,
    factor: usize,
    out: &Tensor<T>,
    dy: &[T],
    bp: &mut Backprop<'_, T>,
) {
    let len = bp.values[input.0].dims3().expect("validated").2;
    let l_out = out.dims3().expect("validated").2;
    let Some(dx) = bp.grad(input) else { return };
    let taps: Vec<_> = (0..l_out).map(|i| upsample_taps(i, factor, len)).collect();
    for (g_row, d_row) in dy.chunks_exact(l_out).zip(dx.chunks_exact_mut(len)) {
        for (&g, &(i0, i1, frac)) in g_row.iter().zip(&taps) {
            let f = T::from_f64(frac);
            d_row[i0] += g * (T::one() - f);
            d_row[i1] += g * f;
        }
    }
}
