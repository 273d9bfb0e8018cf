//! Objective oracles over a single matrix parameter, plus data generators.

mod data;
mod mlp;
mod mse;
mod oracle;
mod quadratic;

pub use data::{
    gaussian_clusters, gaussian_features, load_features_csv, load_labels_csv, lowrank_features, lowrank_profile,
    onehot_from_classes, onehot_labels, save_matrix_csv, teacher_labels, LabelFormat,
};
pub use mlp::{mlp_new, Mlp, MlpEval, MlpLayer, MlpLoss, KINK_TOL};
pub use mse::{linear_mse_new, LinearMse};
pub use oracle::{stochastic_oracle, StochasticGradOracle};
pub use quadratic::{
    make_ill_conditioned_q, quadratic_new, IllConditionedQ, KroneckerQuadratic, Quadratic, QuadraticScale, SpectrumProfile,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::{MatError, Matrix};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Whether [`Problem::hvp`] is exact or a finite-difference estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpKind {
    Exact,
    FiniteDifference,
}

/// Known problem constants. Absent entries are unknown.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    /// Frobenius smoothness constant.
    pub l: Option<f64>,
    /// Spectral smoothness constant (nuclear-norm gradient Lipschitz under op-norm moves).
    pub l_star: Option<f64>,
    pub w_star: Option<Matrix>,
    pub f_star: Option<f64>,
    /// Gradient noise level.
    pub sigma: Option<f64>,
}

/// Objective with value, gradient and Hessian-vector product over an m×n
/// matrix parameter. Implementations panic when handed a matrix of the wrong
/// shape; call [`Problem::check_shape`] at API boundaries.
pub trait Problem: Send + Sync {
    fn shape(&self) -> (usize, usize);
    fn value(&self, w: &Matrix) -> f64;
    fn grad(&self, w: &Matrix) -> Matrix;
    fn hvp(&self, w: &Matrix, d: &Matrix) -> Matrix;
    fn hvp_kind(&self) -> HvpKind;
    fn meta(&self) -> &ProblemMeta;

    fn value_and_grad(&self, w: &Matrix) -> (f64, Matrix) {
        (self.value(w), self.grad(w))
    }

    /// True when the third derivative vanishes identically.
    fn is_quadratic(&self) -> bool {
        false
    }

    /// True when `w` sits within tolerance of a non-differentiable point.
    fn near_kink(&self, _w: &Matrix) -> bool {
        false
    }

    fn check_shape(&self, w: &Matrix) -> Result<(), ProblemError> {
        if w.shape() == self.shape() {
            Ok(())
        } else {
            Err(ProblemError::Dimension(format!(
                "parameter {:?}, problem expects {:?}",
                w.shape(),
                self.shape()
            )))
        }
    }
}

macro_rules! forward_problem {
    ($($ty:ty),*) => {$(
        impl<P: Problem + ?Sized> Problem for $ty {
            fn shape(&self) -> (usize, usize) { (**self).shape() }
            fn value(&self, w: &Matrix) -> f64 { (**self).value(w) }
            fn grad(&self, w: &Matrix) -> Matrix { (**self).grad(w) }
            fn hvp(&self, w: &Matrix, d: &Matrix) -> Matrix { (**self).hvp(w, d) }
            fn hvp_kind(&self) -> HvpKind { (**self).hvp_kind() }
            fn meta(&self) -> &ProblemMeta { (**self).meta() }
            fn value_and_grad(&self, w: &Matrix) -> (f64, Matrix) { (**self).value_and_grad(w) }
            fn is_quadratic(&self) -> bool { (**self).is_quadratic() }
            fn near_kink(&self, w: &Matrix) -> bool { (**self).near_kink(w) }
        }
    )*};
}

forward_problem!(&P, Box<P>, std::sync::Arc<P>);

/// Central finite-difference Hessian-vector product of `grad` at `w` along `d`.
pub fn fd_hvp(grad: impl Fn(&Matrix) -> Matrix, w: &Matrix, d: &Matrix) -> Matrix {
    let dn = crate::matcore::frobenius_norm(d);
    if dn == 0.0 {
        return Matrix::zeros(w.rows(), w.cols());
    }
    let eps = 1e-4 * (1.0 + crate::matcore::frobenius_norm(w)) / (1.0 + dn);
    let mut plus = w.clone();
    plus.axpy(eps, d);
    let mut minus = w.clone();
    minus.axpy(-eps, d);
    let mut out = grad(&plus).sub(&grad(&minus));
    out.scale_mut(0.5 / eps);
    out
}
