//! Polar factor (nearest semi-orthogonal matrix) by SVD or Newton–Schulz.

use serde::{Deserialize, Serialize};

use super::decomp::svd;
use super::norms::frobenius_norm;
use super::{MatError, Matrix};

/// Singular values at or below `RANK_TOL · σ_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Polar factor together with the spectrum it was taken from.
#[derive(Clone, Debug)]
pub struct PolarFactor {
    /// U_r · V_rᵀ over the retained singular directions.
    pub o: Matrix,
    pub rank: usize,
    /// Full singular values of the input, nonincreasing.
    pub singular_values: Vec<f64>,
}

impl PolarFactor {
    /// ⟨A, O⟩ = ‖A‖_* over the retained directions.
    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values[..self.rank].iter().sum()
    }
}

pub fn polar(a: &Matrix) -> PolarFactor {
    let dec = svd(a);
    let rank = dec.rank(RANK_TOL);
    let o = if rank == 0 {
        Matrix::zeros(a.rows(), a.cols())
    } else {
        dec.u.columns(0, rank).matmul_t(&dec.v.columns(0, rank))
    };
    PolarFactor {
        o,
        rank,
        singular_values: dec.s,
    }
}

/// U_r · V_rᵀ; the zero matrix maps to zero.
pub fn orthogonalize_svd(a: &Matrix) -> Matrix {
    polar(a).o
}

/// Coefficient families for the odd quintic X ← aX + b(XXᵀ)X + c(XXᵀ)²X.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsCoefficients {
    /// Per-step minimax quintics, then the classical iteration.
    #[default]
    Scheduled,
    /// Constant (3.4445, −4.7750, 2.0315), as in the widely used reference code.
    Jordan,
    /// Constant (15/8, −10/8, 3/8); converges to the exact polar factor.
    Classical,
}

/// Minimax-optimal odd quintics on the interval each step maps to, starting
/// from singular values in [0.0025, 1] after Frobenius normalization.
const SCHEDULE: [[f64; 3]; 5] = [
    [8.40517771286217, -24.8508073275991, 18.4246170587486],
    [4.0771741264851, -3.03504243611951, 0.572207056918328],
    [3.60579154737001, -2.69963313723389, 0.534011534310601],
    [2.61773323094343, -1.94128901647318, 0.448639858477268],
    [1.94493407970623, -1.32568756385818, 0.382645623409444],
];
const JORDAN: [f64; 3] = [3.4445, -4.7750, 2.0315];
const CLASSICAL: [f64; 3] = [1.875, -1.25, 0.375];

impl NsCoefficients {
    pub fn at_step(self, step: usize) -> [f64; 3] {
        match self {
            NsCoefficients::Scheduled => SCHEDULE.get(step).copied().unwrap_or(CLASSICAL),
            NsCoefficients::Jordan => JORDAN,
            NsCoefficients::Classical => CLASSICAL,
        }
    }
}

pub const DEFAULT_NS_STEPS: usize = 5;

/// Newton–Schulz approximation of the polar factor with the default schedule.
pub fn orthogonalize_ns(a: &Matrix, steps: usize) -> Result<Matrix, MatError> {
    orthogonalize_ns_with(a, steps, NsCoefficients::default())
}

pub fn orthogonalize_ns_with(a: &Matrix, steps: usize, coeffs: NsCoefficients) -> Result<Matrix, MatError> {
    let nrm = frobenius_norm(a);
    if nrm == 0.0 {
        return Err(MatError::ZeroMatrix);
    }
    // Iterate on the wide orientation so the Gram matrix is the small one.
    let tall = a.rows() > a.cols();
    let mut x = if tall { a.transpose() } else { a.clone() };
    x.scale_mut(1.0 / nrm);
    for step in 0..steps {
        let [ca, cb, cc] = coeffs.at_step(step);
        let g = x.gram();
        let mut p = g.matmul(&g);
        p.scale_mut(cc);
        p.axpy(cb, &g);
        let mut next = p.matmul(&x);
        next.axpy(ca, &x);
        x = next;
    }
    Ok(if tall { x.transpose() } else { x })
}
