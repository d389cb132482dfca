//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Values live in plain [`Tensor`]s. A forward pass registers tensors on a
//! [`Tape`] (parameters as differentiable leaves, everything else as
//! constants) and builds new nodes through the operations on [`Var`].
//! [`Tape::backward`] walks the tape once in reverse and returns a [`Grads`]
//! store; [`Tensor::accumulate_grad`] folds a leaf's gradient back into the
//! owning tensor.
//!
//! Only one broadcast exists: adding a `[n]` bias to every row of an
//! `[m, n]` matrix.

mod check;
mod gemm;
mod tape;
mod tensor;

pub use check::{grad_check, grad_check_report, GradCheckReport};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
