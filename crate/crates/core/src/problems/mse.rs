use std::sync::OnceLock;

use super::{HvpKind, Problem, ProblemError, ProblemMeta};
use crate::matcore::{frobenius_norm, operator_norm, pinv, Matrix};

/// f(W) = ‖WX − Y‖_F² / (2B) for features X (d×B) and targets Y (c×B).
#[derive(Clone, Debug)]
pub struct LinearMse {
    x: Matrix,
    y: Matrix,
    /// XXᵀ/B.
    xxt: Matrix,
    /// YXᵀ/B.
    yxt: Matrix,
    meta: ProblemMeta,
    optimum: OnceLock<(Matrix, f64)>,
}

pub fn linear_mse_new(x: Matrix, y: Matrix) -> Result<LinearMse, ProblemError> {
    if x.cols() != y.cols() {
        return Err(ProblemError::Dimension(format!(
            "X has {} samples but Y has {}",
            x.cols(),
            y.cols()
        )));
    }
    let b = x.cols() as f64;
    let xxt = x.gram().scale(1.0 / b).symmetrize();
    let yxt = y.matmul_t(&x).scale(1.0 / b);
    let meta = ProblemMeta {
        l: Some(operator_norm(&x).powi(2) / b),
        l_star: Some(frobenius_norm(&x).powi(2) / b),
        ..ProblemMeta::default()
    };
    Ok(LinearMse {
        x,
        y,
        xxt,
        yxt,
        meta,
        optimum: OnceLock::new(),
    })
}

impl LinearMse {
    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn targets(&self) -> &Matrix {
        &self.y
    }

    pub fn batch(&self) -> usize {
        self.x.cols()
    }

    /// XXᵀ/B.
    pub fn feature_gram(&self) -> &Matrix {
        &self.xxt
    }

    /// Minimum-norm least-squares solution Y·X⁺ and its loss, computed once.
    pub fn least_squares(&self) -> &(Matrix, f64) {
        self.optimum.get_or_init(|| {
            let w = self.y.matmul(&pinv(&self.x));
            let f = self.value(&w);
            (w, f)
        })
    }

    /// Copy whose metadata carries the least-squares W* and f*.
    pub fn with_least_squares_optimum(&self) -> LinearMse {
        let (w, f) = self.least_squares().clone();
        let mut out = self.clone();
        out.meta.w_star = Some(w);
        out.meta.f_star = Some(f);
        out
    }

    /// Copy whose metadata uses the given reference point as W* (f* = f(W*)).
    pub fn with_reference_optimum(&self, w_star: Matrix) -> Result<LinearMse, ProblemError> {
        self.check_shape(&w_star)?;
        let mut out = self.clone();
        out.meta.f_star = Some(self.value(&w_star));
        out.meta.w_star = Some(w_star);
        Ok(out)
    }
}

impl Problem for LinearMse {
    fn shape(&self) -> (usize, usize) {
        (self.y.rows(), self.x.rows())
    }

    fn value(&self, w: &Matrix) -> f64 {
        let r = w.matmul(&self.x).sub(&self.y);
        0.5 * r.dot(&r) / self.x.cols() as f64
    }

    fn grad(&self, w: &Matrix) -> Matrix {
        w.matmul(&self.xxt).sub(&self.yxt)
    }

    fn hvp(&self, _w: &Matrix, d: &Matrix) -> Matrix {
        d.matmul(&self.xxt)
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::Exact
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}
