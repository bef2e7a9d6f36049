//! Reverse-mode automatic differentiation over dense tensors.

#[cfg(feature = "conv")]
mod conv;
mod tape;
mod tensor;

pub use tape::{Gradients, Op, Reduction, Tape, Var};
pub use tensor::{Scalar, Tensor};
