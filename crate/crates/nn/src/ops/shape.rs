use super::conv::shape_like;
use crate::error::{shape_err, Result};
use crate::graph::{Backprop, Op, Var};
use crate::scalar::matmul;
use crate::{Graph, Scalar, Tensor};

impl<T: Scalar> Graph<T> {
    /// Concatenates `[N, C_i, L]` tensors along the channel axis.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return shape_err("concat needs at least one input");
        };
        let (n, _, len) = self.value(first).dims3()?;
        let mut channels = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let (vn, vc, vl) = self.value(v).dims3()?;
            if vn != n || vl != len {
                return shape_err(format!("concat mismatch: [{vn}, _, {vl}] vs [{n}, _, {len}]"));
            }
            channels.push(vc);
        }
        let total: usize = channels.iter().sum();
        let mut out = Vec::with_capacity(n * total * len);
        for b in 0..n {
            for (&v, &c) in inputs.iter().zip(&channels) {
                out.extend_from_slice(&self.value(v).data()[b * c * len..(b + 1) * c * len]);
            }
        }
        let shape = shape_like(self.value(first).shape(), n, total, len);
        let req = inputs.iter().any(|&v| self.requires(v));
        Ok(self.push(Tensor::new(shape, out)?, req, Op::Concat { inputs: inputs.to_vec() }))
    }

    /// Mean over time: `[N, C, L] -> [N, C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        let scale = T::one() / T::from_f64(len as f64);
        let out = x
            .data()
            .chunks_exact(len)
            .map(|r| r.iter().copied().sum::<T>() * scale)
            .collect();
        let req = self.requires(input);
        Ok(self.push(Tensor::new(vec![n, c], out)?, req, Op::GlobalAvgPool { input }))
    }

    /// Fully connected layer: `[N, In] x [Out, In]^T + [Out] -> [N, Out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = self.value(input);
        let &[n, d_in] = x.shape() else {
            return shape_err(format!("linear input must be [N, In], got {:?}", x.shape()));
        };
        let w = self.value(weight);
        let &[d_out, w_in] = w.shape() else {
            return shape_err(format!("linear weight must be [Out, In], got {:?}", w.shape()));
        };
        if w_in != d_in || self.value(bias).len() != d_out {
            return shape_err(format!("linear expects {w_in} inputs and {d_out} biases"));
        }
        let bd = self.value(bias).data();
        let mut out: Vec<T> = (0..n).flat_map(|_| bd.iter().copied()).collect();
        matmul(false, true, n, d_in, d_out, x.data(), w.data(), T::one(), &mut out);
        let req = self.requires(input) || self.requires(weight) || self.requires(bias);
        Ok(self.push(
            Tensor::new(vec![n, d_out], out)?,
            req,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Right-pads along time to `new_len` by repeating the last sample.
    pub fn pad_edge(&mut self, input: Var, new_len: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c, len) = x.dims3()?;
        if new_len < len {
            return shape_err(format!("pad target {new_len} shorter than input {len}"));
        }
        let mut out = Vec::with_capacity(n * c * new_len);
        for row in x.data().chunks_exact(len) {
            out.extend_from_slice(row);
            out.extend(std::iter::repeat_n(row[len - 1], new_len - len));
        }
        let shape = shape_like(x.shape(), n, c, new_len);
        let req = self.requires(input);
        Ok(self.push(Tensor::new(shape, out)?, req, Op::PadEdge { input }))
    }

    /// Time window `[start, start + len)` of every channel.
    pub fn slice_time(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        let (n, c, l) = x.dims3()?;
        if len == 0 || start + len > l {
            return shape_err(format!("slice [{start}, {}) outside length {l}", start + len));
        }
        let out: Vec<T> = x
            .data()
            .chunks_exact(l)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let shape = shape_like(x.shape(), n, c, len);
        let req = self.requires(input);
        Ok(self.push(Tensor::new(shape, out)?, req, Op::Slice { input, start }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return shape_err(format!("add shape mismatch {:?} vs {:?}", x.shape(), y.shape()));
        }
        let out = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(t, req, Op::Add { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let y = self.value(input).map(|v| v * factor);
        let req = self.requires(input);
        self.push(y, req, Op::Scale { input, factor })
    }

    /// Scalar `sum_i x_i * w_i`; the usual way to probe gradients of a tensor-valued op.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<T>) -> Result<Var> {
        let x = self.value(input);
        if x.len() != weights.len() {
            return shape_err(format!("weighted_sum needs {} weights, got {}", x.len(), weights.len()));
        }
        let s: T = x.data().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let req = self.requires(input);
        Ok(self.push(Tensor::new(vec![1], vec![s])?, req, Op::WeightedSum { input, weights }))
    }
}

pub(crate) fn concat_backward<T: Scalar>(inputs: &[Var], out: &Tensor<T>, dy: &[T], bp: &mut Backprop<'_, T>) {
    let (n, total, len) = out.dims3().expect("validated");
    let mut offset = 0;
    for &v in inputs {
        let c = bp.values[v.0].dims3().expect("validated").1;
        if let Some(dx) = bp.grad(v) {
            for b in 0..n {
                let src = &dy[(b * total + offset) * len..(b * total + offset + c) * len];
                for (d, &g) in dx[b * c * len..(b + 1) * c * len].iter_mut().zip(src) {
                    *d += g;
                }
            }
        }
        offset += c;
    }
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(input: Var, dy: &[T], bp: &mut Backprop<'_, T>) {
    let len = bp.values[input.0].dims3().expect("validated").2;
    let Some(dx) = bp.grad(input) else { return };
    let scale = T::one() / T::from_f64(len as f64);
    for (row, &g) in dx.chunks_exact_mut(len).zip(dy) {
        row.iter_mut().for_each(|d| *d += g * scale);
    }
}

pub(crate) fn linear_backward<T: Scalar>(input: Var, weight: Var, bias: Var, dy: &[T], bp: &mut Backprop<'_, T>) {
    let values = bp.values;
    let (n, d_in) = (values[input.0].shape()[0], values[input.0].shape()[1]);
    let d_out = values[weight.0].shape()[0];
    if let Some(db) = bp.grad(bias) {
        for row in dy.chunks_exact(d_out) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
    }
    if let Some(dw) = bp.grad(weight) {
        // dW[Out, In] += dy^T[Out, N] x[N, In]
        matmul(true, false, d_out, n, d_in, dy, values[input.0].data(), T::one(), dw);
    }
    if let Some(dx) = bp.grad(input) {
        matmul(false, false, n, d_out, d_in, dy, values[weight.0].data(), T::one(), dx);
    }
}

pub(crate) fn pad_edge_backward<T: Scalar>(input: Var, out: &Tensor<T>, dy: &[T], bp: &mut Backprop<'_, T>) {
    let len = bp.values[input.0].dims3().expect("validated").2;
    let new_len = out.dims3().expect("validated").2;
    let Some(dx) = bp.grad(input) else { return };
    for (d_row, g_row) in dx.chunks_exact_mut(len).zip(dy.chunks_exact(new_len)) {
        for (d, &g) in d_row.iter_mut().zip(g_row) {
            *d += g;
        }
        d_row[len - 1] += g_row[len..].iter().copied().sum::<T>();
    }
}

pub(crate) fn slice_backward<T: Scalar>(input: Var, start: usize, out: &Tensor<T>, dy: &[T], bp: &mut Backprop<'_, T>) {
    let len = bp.values[input.0].dims3().expect("validated").2;
    let sl = out.dims3().expect("validated").2;
    let Some(dx) = bp.grad(input) else { return };
    for (d_row, g_row) in dx.chunks_exact_mut(len).zip(dy.chunks_exact(sl)) {
        for (d, &g) in d_row[start..start + sl].iter_mut().zip(g_row) {
            *d += g;
        }
    }
}

pub(crate) fn add_backward<T: Scalar>(a: Var, b: Var, dy: &[T], bp: &mut Backprop<'_, T>) {
    for v in [a, b] {
        if let Some(dx) = bp.grad(v) {
            dx.iter_mut().zip(dy).for_each(|(d, &g)| *d += g);
        }
    }
}

pub(crate) fn scale_backward<T: Scalar>(input: Var, factor: T, dy: &[T], bp: &mut Backprop<'_, T>) {
    if let Some(dx) = bp.grad(input) {
        dx.iter_mut().zip(dy).for_each(|(d, &g)| *d += g * factor);
    }
}

pub(crate) fn weighted_sum_backward<T: Scalar>(input: Var, weights: &[T], dy: &[T], bp: &mut Backprop<'_, T>) {
    if let Some(dx) = bp.grad(input) {
        dx.iter_mut().zip(weights).for_each(|(d, &w)| *d += dy[0] * w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_then_slice_round_trips() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![1, 1, 3], vec![1., 2., 3.]).unwrap());
        let p = g.pad_edge(x, 6).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3., 3., 3., 3.]);
        let s = g.slice_time(p, 0, 3).unwrap();
        assert_eq!(g.value(s).data(), &[1., 2., 3.]);
    }

    #[test]
    fn concat_interleaves_per_batch() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::new(vec![2, 1, 2], vec![1., 2., 3., 4.]).unwrap());
        let b = g.input(Tensor::new(vec![2, 1, 2], vec![5., 6., 7., 8.]).unwrap());
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 2, 2]);
        assert_eq!(g.value(c).data(), &[1., 2., 5., 6., 3., 4., 7., 8.]);
    }

    #[test]
    fn linear_matches_hand_product() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![1, 2], vec![1., 2.]).unwrap());
        let w = g.input(Tensor::new(vec![3, 2], vec![1., 0., 0., 1., 1., 1.]).unwrap());
        let b = g.input(Tensor::new(vec![3], vec![0.5, 0., -1.]).unwrap());
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, 2., 2.]);
    }
}
