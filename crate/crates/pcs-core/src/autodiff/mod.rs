//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Just enough machinery for the simplification network and its losses:
//! matrix primitives with hand-derived adjoints, a temperature softmax, and
//! a finite-difference checker to keep every adjoint honest.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_STEP, DEFAULT_TOL};
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;
