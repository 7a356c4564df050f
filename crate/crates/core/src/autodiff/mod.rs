//! Reverse-mode automatic differentiation over dense tensors, and Adam.
//!
//! Operations are recorded on a [`Tape`] as they are evaluated. Every node
//! keeps its forward value; [`Tape::backward`] walks the nodes in reverse
//! recording order and accumulates gradients into every node that requires
//! one. Parameters enter a tape as leaves through [`Tape::leaf`], and their
//! gradients are copied back with [`Tape::grad`].
//!
//! ```
//! use neuralps::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.leaf(&Tensor::new([2], vec![1.0, 2.0]).unwrap().with_grad());
//! let sq = tape.square(x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), vec![2.0, 4.0]);
//! ```

mod adam;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, Param};
pub use scalar::Scalar;
pub(crate) use scalar::{gemm, MatView};
pub use tape::{Op, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible input shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("{op}: expected {expected} input(s), got {got}")]
    Arity { op: &'static str, expected: usize, got: usize },
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("optimizer state does not match parameter `{0}`")]
    StateMismatch(String),
}
