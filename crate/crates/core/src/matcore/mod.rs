//! Dense matrix primitives: norms, SVD, polar factor, Newton–Schulz,
//! Kronecker products and row-major vectorization.

mod decomp;
mod kron;
mod matrix;
mod norms;
mod orth;
pub mod random;

pub use decomp::{check_spd, pinv, qr_q, singular_values, svd, sym_eigen, SvdResult, SymEigen};
pub use kron::{kron, matvec, KRON_MAX_ENTRIES};
pub use matrix::{gemm, unvec_row, vec_row, Matrix};
pub use norms::{
    frobenius_norm, lambda_norm, lambda_norm_unchecked, nuclear_norm, operator_norm, spectral_norm,
    spectral_norm_with, PowerIteration, SpectralEstimate,
};
pub use orth::{
    orthogonalize_ns, orthogonalize_ns_with, orthogonalize_svd, polar, NsCoefficients, PolarFactor,
    DEFAULT_NS_STEPS, RANK_TOL,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("matrix must be square, got {0:?}")]
    NotSquare((usize, usize)),
    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("Newton-Schulz needs a nonzero input")]
    ZeroMatrix,
    #[error("Kronecker product {rows}x{cols} exceeds the size guard")]
    TooLarge { rows: usize, cols: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
