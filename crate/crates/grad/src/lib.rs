// SPDX-License-Identifier: Apache-2.0

//! Minimal reverse-mode differentiation for message-passing networks.
//!
//! Values live on a [`Tape`] as row-major matrices of `f64`. Every primitive
//! records just enough state to run its vector-Jacobian product, and
//! [`Tape::backward`] walks the records in reverse exactly once.
//!
//! The primitive set is deliberately small: dense linear maps, elementwise
//! nonlinearities, layer normalization, row softmax, gathers and segment
//! reductions keyed by edge target, multi-head helpers for graph attention,
//! block-diagonal self-attention and a row-masked squared-error loss.
//!
//! ```
//! use diffplace_grad::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(&Tensor::from_vec(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap());
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &[2.0, -4.0, 1.0]);
//! ```

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: index {index} out of range for {len} rows")]
    Index { op: &'static str, index: usize, len: usize },
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
}

pub type Result<T, E = GradError> = std::result::Result<T, E>;
