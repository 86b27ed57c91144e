//! Dense matrices, a reverse-mode tape, Adam, and a finite-difference
//! gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use tape::{BackwardFault, Gradients, Mask, Tape, Var};
pub use tensor::{Axis, Tensor};
