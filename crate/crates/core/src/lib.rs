//! Muon-family optimizers on matrix parameters, with the norm geometry,
//! Hessian diagnostics and bound checkers needed to study them.
//!
//! Conventions: matrices are row-major, and `vec_row` stacks rows, so a
//! Hessian acting as `D ↦ P·D·Qᵀ` is the Kronecker product `P ⊗ Q`.

pub mod diagnostics;
pub mod matcore;
pub mod optim;
pub mod problems;
pub mod verify;

pub use matcore::{MatError, Matrix};
pub use problems::Problem;
