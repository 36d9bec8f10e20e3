//! Dense tensors, a reverse-mode computation graph, and the Adam optimizer.
//!
//! Everything the model needs is built from a handful of primitives on
//! [`Graph`]: `matmul`, `add`, `mul`, `concat`, `slice`, `tanh`, `sigmoid`,
//! `relu`, `sum` and `softmax_cross_entropy`. Each one records enough to
//! push gradients back to its inputs when [`Graph::backward`] runs.
//!
//! ```
//! use hinge_qe::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![1.0, 2.0]));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

mod adam;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamError, AdamState};
pub use graph::{sigmoid, Graph, NodeId};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: axis {axis} is invalid for rank {rank}")]
    Axis { op: &'static str, axis: usize, rank: usize },
    #[error("tensors are limited to rank 3, got rank {0}")]
    Rank(usize),
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("target class {target} is outside 0..{classes}")]
    Target { target: usize, classes: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
