//! Dense `f64` tensors and a tape-based reverse-mode differentiation engine.
//!
//! The engine is deliberately small: a closed set of operations (see
//! [`Tape`]) from which the estimator, the generator and all training losses
//! are composed. A fresh [`Tape`] is built for every forward pass, and
//! parameters live outside the tape in plain [`Tensor`]s.

mod conv;
mod init;
mod optim;
mod tape;

pub use init::kaiming_init;
pub use optim::{adam_step, cosine_anneal, AdamConfig, AdamState};
pub use tape::{BatchNormMode, BatchNormStats, DiffTensor, Tape, UnaryOp};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    Invalid { op: &'static str, reason: String },
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}

pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        reason: reason.into(),
    }
}

/// Number of elements implied by a shape. The empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Plain row-major tensor, used for parameters, optimizer state and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(invalid("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        if numel(&shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For every flat index of `big`, the flat index of `small` it reads from
/// under numpy-style broadcasting (right-aligned, size-1 dims repeat).
pub(crate) fn broadcast_map(small: &[usize], big: &[usize]) -> Result<Vec<usize>, TensorError> {
    let err = || TensorError::ShapeMismatch {
        op: "broadcast",
        lhs: small.to_vec(),
        rhs: big.to_vec(),
    };
    if small.len() > big.len() {
        return Err(err());
    }
    let lead = big.len() - small.len();
    let small_strides = strides(small);
    let mut eff = vec![0usize; big.len()];
    for (i, &d) in small.iter().enumerate() {
        let b = big[lead + i];
        if d == b {
            eff[lead + i] = small_strides[i];
        } else if d == 1 {
            eff[lead + i] = 0;
        } else {
            return Err(err());
        }
    }
    let total = numel(big);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; big.len()];
    let mut offset = 0usize;
    for _ in 0..total {
        map.push(offset);
        for ax in (0..big.len()).rev() {
            idx[ax] += 1;
            offset += eff[ax];
            if idx[ax] < big[ax] {
                break;
            }
            offset -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Ok(map)
}
