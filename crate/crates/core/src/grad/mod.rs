//! Reverse-mode automatic differentiation over dense double-precision
//! tensors, plus the Adam optimizer and a finite-difference oracle.
//!
//! The primitive set is exactly what the intent classifier needs: matmul,
//! (broadcasting) add, elementwise multiply, sigmoid/tanh/relu,
//! length-preserving 1-D convolution, embedding gather, last-axis concat,
//! first-axis slice, and fused softmax cross-entropy.
//!
//! A tape and its tensors belong to a single thread; independent tapes may
//! run in parallel freely.

mod adam;
mod check;
mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamParams, AdamState};
pub use check::{finite_difference_check, finite_difference_check_multi};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
