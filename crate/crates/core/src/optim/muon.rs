use serde::{Deserialize, Serialize};

use super::{check_eta, check_shapes, OptimError};
use crate::matcore::{orthogonalize_ns_with, orthogonalize_svd, Matrix, NsCoefficients};

/// How the momentum matrix is mapped to its polar factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Orthogonalizer {
    #[default]
    Svd,
    NewtonSchulz { steps: usize, coefficients: NsCoefficients },
}

impl Orthogonalizer {
    pub fn newton_schulz(steps: usize) -> Self {
        Orthogonalizer::NewtonSchulz {
            steps,
            coefficients: NsCoefficients::default(),
        }
    }

    /// Polar factor of `m`; the zero matrix maps to zero on both routes.
    pub fn apply(&self, m: &Matrix) -> Matrix {
        match *self {
            Orthogonalizer::Svd => orthogonalize_svd(m),
            Orthogonalizer::NewtonSchulz { steps, coefficients } => {
                orthogonalize_ns_with(m, steps, coefficients).unwrap_or_else(|_| Matrix::zeros(m.rows(), m.cols()))
            }
        }
    }
}

/// Momentum buffer and counter for Muon.
#[derive(Clone, Debug)]
pub struct MuonState {
    momentum: Option<Matrix>,
    t: usize,
    beta: f64,
    orthogonalizer: Orthogonalizer,
}

/// Next iterate and the direction that produced it.
#[derive(Clone, Debug)]
pub struct MuonStep {
    pub w: Matrix,
    pub direction: Matrix,
}

impl MuonState {
    pub fn new(beta: f64, orthogonalizer: Orthogonalizer) -> Result<Self, OptimError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(OptimError::InvalidHyperparameter(format!("beta {beta} not in [0, 1)")));
        }
        Ok(Self {
            momentum: None,
            t: 0,
            beta,
            orthogonalizer,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn momentum(&self) -> Option<&Matrix> {
        self.momentum.as_ref()
    }

    pub fn orthogonalizer(&self) -> Orthogonalizer {
        self.orthogonalizer
    }

    pub fn step(&mut self, w: &Matrix, g: &Matrix, eta: f64) -> Result<MuonStep, OptimError> {
        check_shapes(w, g)?;
        check_eta(eta)?;
        let m = match self.momentum.take() {
            None => g.clone(),
            Some(prev) => {
                check_shapes(&prev, g)?;
                let mut m = prev.scale(self.beta);
                m.axpy(1.0 - self.beta, g);
                m
            }
        };
        let direction = self.orthogonalizer.apply(&m);
        self.momentum = Some(m);
        self.t += 1;
        let mut next = w.clone();
        next.axpy(-eta, &direction);
        Ok(MuonStep { w: next, direction })
    }
}

/// W − η · orthogonalize(M_t), updating the momentum buffer.
pub fn muon_step(state: &mut MuonState, w: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix, OptimError> {
    state.step(w, g, eta).map(|s| s.w)
}

/// W − η · U Vᵀ from the SVD of the gradient itself.
pub fn simplified_muon_step(w: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix, OptimError> {
    check_shapes(w, g)?;
    check_eta(eta)?;
    let mut next = w.clone();
    next.axpy(-eta, &orthogonalize_svd(g));
    Ok(next)
}
