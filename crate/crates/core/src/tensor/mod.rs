//! Dense tensors and a reverse-mode differentiation tape.
//!
//! The primitive set is exactly what the prediction model needs: matmul,
//! elementwise add/mul, concat and slice on the last axis, softmax,
//! leaky-relu/sigmoid/tanh, sum/mean/l2norm reductions, row lookup, and
//! multiplication by a constant. No broadcasting beyond scalar-tensor,
//! no implicit reshapes: every backward rule stays auditable.

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, GradReport};
pub use tape::{PrimitiveKind, Tape, Var};

use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("softmax over an empty axis (shape {shape:?})")]
    EmptySoftmax { shape: Vec<usize> },
    #[error("tensor must not be empty (shape {shape:?})")]
    EmptyTensor { shape: Vec<usize> },
    #[error("shape {shape:?} does not match {len} data elements")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    #[error("slice [{start}, {start}+{len}) out of bounds for axis extent {extent}")]
    SliceOutOfBounds {
        start: usize,
        len: usize,
        extent: usize,
    },
    #[error("lookup index {index} out of bounds for table with {rows} rows")]
    IndexOutOfBounds { index: usize, rows: usize },
    #[error("apply: {op} expects {expected} inputs, got {got}")]
    BadArity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward already ran on this tape; record a fresh graph first")]
    TapeConsumed,
    #[error("non-finite input rejected by {op}")]
    NonFinite { op: &'static str },
    #[error("gradient check: function returned NaN at probe index {index} (x[{index}] = {probe})")]
    NanProbe { index: usize, probe: f64 },
}

/// Dense n-dimensional value stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> TensorData<S> {
    /// Builds a tensor, checking `product(shape) == data.len()` and non-emptiness.
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        if numel == 0 {
            return Err(TensorError::EmptyTensor { shape });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(numel > 0, "zeros: empty shape {shape:?}");
        Self {
            shape,
            data: vec![S::zero(); numel],
        }
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<S>) -> Self {
        assert!(!data.is_empty(), "vector: empty data");
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Row-major matrix from a flat buffer.
    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Result<Self, TensorError> {
        Self::new(shape, data.iter().map(|&v| S::of_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Extent of the last axis.
    pub fn last_extent(&self) -> usize {
        *self.shape.last().expect("tensors are never rank 0")
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }
}
