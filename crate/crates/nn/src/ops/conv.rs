use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::scalar::matmul;
use crate::{Graph, Scalar, Tensor};

/// Output shape with the same rank as the input (`[C, L]` stays 2-D).
pub(crate) fn shape_like(input: &[usize], n: usize, c: usize, l: usize) -> Vec<usize> {
    if input.len() == 2 {
        vec![c, l]
    } else {
        vec![n, c, l]
    }
}

/// Unfolds one `[C_in, L]` sample into a `[C_in * K, L_out]` column matrix with zero padding.
fn im2col<T: Scalar>(x: &[T], c_in: usize, len: usize, k: usize, pad: usize, l_out: usize, col: &mut [T]) {
    for ci in 0..c_in {
        let row_in = &x[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let row = &mut col[(ci * k + kk) * l_out..(ci * k + kk + 1) * l_out];
            // output t reads input t + kk - pad
            let t0 = pad.saturating_sub(kk);
            let t1 = (len + pad).saturating_sub(kk).min(l_out);
            row[..t0.min(l_out)].iter_mut().for_each(|v| *v = T::zero());
            if t1 > t0 {
                let s0 = t0 + kk - pad;
                row[t0..t1].copy_from_slice(&row_in[s0..s0 + (t1 - t0)]);
            }
            row[t1.max(t0).min(l_out)..].iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

fn col2im<T: Scalar>(col: &[T], c_in: usize, len: usize, k: usize, pad: usize, l_out: usize, dx: &mut [T]) {
    for ci in 0..c_in {
        let row_out = &mut dx[ci * len..(ci + 1) * len];
        for kk in 0..k {
            let row = &col[(ci * k + kk) * l_out..(ci * k + kk + 1) * l_out];
            let t0 = pad.saturating_sub(kk);
            let t1 = (len + pad).saturating_sub(kk).min(l_out);
            if t1 > t0 {
                let s0 = t0 + kk - pad;
                for (d, &g) in row_out[s0..s0 + (t1 - t0)].iter_mut().zip(&row[t0..t1]) {
                    *d += g;
                }
            }
        }
    }
}

impl<T: Scalar> Graph<T> {
    /// Stride-1 1D convolution (cross-correlation) with symmetric zero padding.
    ///
    /// `input` is `[N, C_in, L]` (or `[C_in, L]`), `weight` is `[C_out, C_in, K]`,
    /// `bias` is `[C_out]`. The output length is `L + 2 * padding - K + 1`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, padding: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c_in, len) = x.dims3()?;
        let w = self.value(weight);
        let &[c_out, wc_in, k] = w.shape() else {
            return shape_err(format!("conv weight must be [C_out, C_in, K], got {:?}", w.shape()));
        };
        if wc_in != c_in {
            return shape_err(format!("conv expects {wc_in} input channels, got {c_in}"));
        }
        if self.value(bias).len() != c_out {
            return shape_err(format!("conv bias must have {c_out} elements"));
        }
        if len + 2 * padding < k {
            return shape_err(format!("conv kernel {k} longer than padded input {}", len + 2 * padding));
        }
        let l_out = len + 2 * padding - k + 1;
        let ck = c_in * k;
        let mut out = vec![T::zero(); n * c_out * l_out];
        let direct = k == 1 && padding == 0;
        let mut col = if direct { Vec::new() } else { vec![T::zero(); ck * l_out] };
        let (xd, wd, bd) = (x.data(), w.data(), self.value(bias).data());
        for b in 0..n {
            let xs = &xd[b * c_in * len..(b + 1) * c_in * len];
            let ys = &mut out[b * c_out * l_out..(b + 1) * c_out * l_out];
            for (co, row) in ys.chunks_exact_mut(l_out).enumerate() {
                row.iter_mut().for_each(|v| *v = bd[co]);
            }
            let cols: &[T] = if direct {
                xs
            } else {
                im2col(xs, c_in, len, k, padding, l_out, &mut col);
                &col
            };
            matmul(false, false, c_out, ck, l_out, wd, cols, T::one(), ys);
        }
        let shape = shape_like(x.shape(), n, c_out, l_out);
        let req = self.requires(input) || self.requires(weight) || self.requires(bias);
        Ok(self.push(
            Tensor::new(shape, out)?,
            req,
            Op::Conv1d {
                input,
                weight,
                bias,
                padding,
            },
        ))
    }
}

pub(crate) fn conv1d_backward<T: Scalar>(
    input: Var,
    weight: Var,
    bias: Var,
    padding: usize,
    out: &Tensor<T>,
    dy: &[T],
    bp: &mut Backprop<'_, T>,
) {
    let values = bp.values;
    let x = &values[input.0];
    let w = &values[weight.0];
    let (n, c_in, len) = x.dims3().expect("validated in forward");
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let l_out = out.dims3().expect("validated in forward").2;
    let ck = c_in * k;
    let direct = k == 1 && padding == 0;

    if let Some(db) = bp.grad(bias) {
        for b in 0..n {
            for co in 0..c_out {
                let off = (b * c_out + co) * l_out;
                db[co] += dy[off..off + l_out].iter().copied().sum::<T>();
            }
        }
    }
    let mut col = vec![T::zero(); ck * l_out];
    if let Some(dw) = bp.grad(weight) {
        for b in 0..n {
            let xs = &x.data()[b * c_in * len..(b + 1) * c_in * len];
            let cols: &[T] = if direct {
                xs
            } else {
                im2col(xs, c_in, len, k, padding, l_out, &mut col);
                &col
            };
            let dys = &dy[b * c_out * l_out..(b + 1) * c_out * l_out];
            matmul(false, true, c_out, l_out, ck, dys, cols, T::one(), dw);
        }
    }
    if let Some(dx) = bp.grad(input) {
        for b in 0..n {
            let dys = &dy[b * c_out * l_out..(b + 1) * c_out * l_out];
            let dxs = &mut dx[b * c_in * len..(b + 1) * c_in * len];
            if direct {
                matmul(true, false, ck, c_out, l_out, w.data(), dys, T::one(), dxs);
            } else {
                matmul(true, false, ck, c_out, l_out, w.data(), dys, T::zero(), &mut col);
                col2im(&col, c_in, len, k, padding, l_out, dxs);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(x: Vec<f64>, c_in: usize, w: Vec<f64>, c_out: usize, k: usize, b: Vec<f64>, pad: usize) -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let len = x.len() / c_in;
        let x = g.input(Tensor::new(vec![c_in, len], x).unwrap());
        let w = g.input(Tensor::new(vec![c_out, c_in, k], w).unwrap());
        let b = g.input(Tensor::new(vec![c_out], b).unwrap());
        let y = g.conv1d(x, w, b, pad).unwrap();
        g.value(y).data().to_vec()
    }

    #[test]
    fn scalar_kernel_scales_input() {
        assert_eq!(conv(vec![1., 2., 3.], 1, vec![2.], 1, 1, vec![0.], 0), vec![2., 4., 6.]);
    }

    #[test]
    fn box_kernel_with_zero_padding() {
        assert_eq!(conv(vec![1., 1., 1.], 1, vec![1., 1., 1.], 1, 3, vec![0.], 1), vec![2., 3., 2.]);
    }

    #[test]
    fn kernel_nine_padding_four_preserves_length() {
        for len in [1, 2, 7, 3000] {
            let y = conv(vec![0.5; len], 1, vec![0.1; 9], 1, 9, vec![0.], 4);
            assert_eq!(y.len(), len);
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(vec![2, 5]));
        let w = g.input(Tensor::zeros(vec![1, 3, 3]));
        let b = g.input(Tensor::zeros(vec![1]));
        assert!(g.conv1d(x, w, b, 1).is_err());
    }

    #[test]
    fn matches_direct_sum_with_multiple_channels() {
        let (c_in, c_out, k, len, pad) = (2, 3, 5, 7, 2);
        let x: Vec<f64> = (0..c_in * len).map(|i| (i as f64 * 0.3).sin()).collect();
        let w: Vec<f64> = (0..c_out * c_in * k).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let y = conv(x.clone(), c_in, w.clone(), c_out, k, b.clone(), pad);
        for co in 0..c_out {
            for t in 0..len {
                let mut acc = b[co];
                for ci in 0..c_in {
                    for kk in 0..k {
                        let s = t as isize + kk as isize - pad as isize;
                        if s >= 0 && (s as usize) < len {
                            acc += w[(co * c_in + ci) * k + kk] * x[ci * len + s as usize];
                        }
                    }
                }
                assert!((y[co * len + t] - acc).abs() < 1e-12);
            }
        }
    }
}
