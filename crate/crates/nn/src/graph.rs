//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node to the tape. Parents always have a smaller
//! index than their children, so a single reverse sweep over the tape visits
//! nodes in a valid topological order.

use std::collections::HashMap;

use crate::error::{shape_err, Result};
use crate::ops;
use crate::params::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        padding: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<u32>,
    },
    AvgPool {
        input: Var,
        window: usize,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    LeakyRelu {
        input: Var,
        slope: T,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        training: bool,
    },
    Softmax {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Concat {
        inputs: Vec<Var>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    PadEdge {
        input: Var,
    },
    Slice {
        input: Var,
        start: usize,
    },
    FocalLogits {
        logits: Var,
        labels: Vec<u8>,
        gamma: T,
    },
    CrossEntropyLogits {
        logits: Var,
        targets: Vec<Option<usize>>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    WeightedSum {
        input: Var,
        weights: Vec<T>,
    },
}

/// Gradient accumulation view handed to each operation's backward rule.
pub(crate) struct Backprop<'a, T> {
    pub values: &'a [Tensor<T>],
    grads: &'a mut [Option<Vec<T>>],
    requires: &'a [bool],
}

impl<T: Scalar> Backprop<'_, T> {
    /// Mutable gradient buffer of `v`, or `None` when `v` does not require a gradient.
    pub fn grad(&mut self, v: Var) -> Option<&mut [T]> {
        if !self.requires[v.0] {
            return None;
        }
        let len = self.values[v.0].len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }
}

/// A computation tape over tensors of scalar type `T`.
pub struct Graph<T> {
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Vec<T>>>,
    requires: Vec<bool>,
    ops: Vec<Op<T>>,
    bound: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            requires: Vec::new(),
            ops: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, requires: bool, op: Op<T>) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.requires.push(requires);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub(crate) fn requires(&self, v: Var) -> bool {
        self.requires[v.0]
    }

    /// Adds a constant input that never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Adds a leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Binds a stored parameter into this graph; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId, trainable: bool) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), trainable, Op::Leaf);
        self.bound.insert(id, v);
        v
    }

    pub(crate) fn bound_params(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound.iter().map(|(&id, &v)| (id, v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.values[v.0].data()[0]
    }

    /// Runs the reverse sweep from a scalar `loss`, filling gradients of every tracked node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return shape_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            ));
        }
        for g in &mut self.grads {
            *g = None;
        }
        if !self.requires[loss.0] {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(out_grad) = self.grads[i].take() else {
                continue;
            };
            let (values_before, _) = self.values.split_at(i);
            let (grads_before, _) = self.grads.split_at_mut(i);
            let mut bp = Backprop {
                values: values_before,
                grads: grads_before,
                requires: &self.requires[..i],
            };
            ops::backward(&self.ops[i], &self.values[i], &out_grad, &mut bp);
            self.grads[i] = Some(out_grad);
        }
        Ok(())
    }
}
