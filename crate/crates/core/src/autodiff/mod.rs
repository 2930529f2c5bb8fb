//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The tape is rebuilt for every forward pass. Parameters enter as
//! [`Tape::leaf`]s, data as [`Tape::constant`]s; after [`Tape::backward`]
//! the returned [`Gradients`] hold `∂loss/∂leaf` for every leaf that
//! influenced the loss.
//!
//! ```
//! use ircut::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
//! let sq = tape.square(x).unwrap();
//! let loss = tape.mean(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[1.0, 2.0]);
//! ```

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckReport, RELATIVE_FLOOR};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{sigmoid, softplus_inverse};
