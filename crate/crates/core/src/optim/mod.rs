//! Optimizer steppers and stepsize schedules.

mod baselines;
mod muon;
mod schedule;

pub use baselines::{
    adam_step, adamw_step, gd_nesterov_step, gd_step, AdamParams, AdamState, NesterovState,
    DEFAULT_NESTEROV_MU,
};
pub use muon::{muon_step, simplified_muon_step, MuonState, MuonStep, Orthogonalizer};
pub use schedule::{next_beta, next_eta, BetaRule, EtaContext, Schedule, ScheduleKind, DETERMINISTIC_BETA};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("shape mismatch: parameter {param:?}, gradient {grad:?}")]
    ShapeMismatch { param: (usize, usize), grad: (usize, usize) },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("schedule constant missing or invalid: {0}")]
    Schedule(String),
}

pub(crate) fn check_shapes(w: &Matrix, g: &Matrix) -> Result<(), OptimError> {
    if w.shape() == g.shape() {
        Ok(())
    } else {
        Err(OptimError::ShapeMismatch {
            param: w.shape(),
            grad: g.shape(),
        })
    }
}

pub(crate) fn check_eta(eta: f64) -> Result<(), OptimError> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(OptimError::InvalidHyperparameter(format!("stepsize {eta}")))
    }
}

/// Declarative optimizer choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Muon { beta: f64, orthogonalizer: Orthogonalizer },
    SimplifiedMuon { orthogonalizer: Orthogonalizer },
    Gd,
    Nesterov { mu: f64 },
    Adam(AdamParams),
    AdamW(AdamParams),
}

impl OptimizerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Muon { .. } => "muon",
            OptimizerSpec::SimplifiedMuon { .. } => "simplified_muon",
            OptimizerSpec::Gd => "gd",
            OptimizerSpec::Nesterov { .. } => "nesterov",
            OptimizerSpec::Adam(_) => "adam",
            OptimizerSpec::AdamW(_) => "adamw",
        }
    }

    pub fn is_muon(&self) -> bool {
        matches!(self, OptimizerSpec::Muon { .. } | OptimizerSpec::SimplifiedMuon { .. })
    }

    pub fn build(&self) -> Result<Optimizer, OptimError> {
        Ok(match self {
            OptimizerSpec::Muon { beta, orthogonalizer } => {
                Optimizer::Muon(MuonState::new(*beta, *orthogonalizer)?)
            }
            OptimizerSpec::SimplifiedMuon { orthogonalizer } => Optimizer::SimplifiedMuon(*orthogonalizer),
            OptimizerSpec::Gd => Optimizer::Gd,
            OptimizerSpec::Nesterov { mu } => Optimizer::Nesterov(NesterovState::new(*mu)?),
            OptimizerSpec::Adam(p) => Optimizer::Adam(AdamState::new(*p)?),
            OptimizerSpec::AdamW(p) => Optimizer::AdamW(AdamState::new(*p)?),
        })
    }
}

/// Stateful optimizer for one parameter matrix.
#[derive(Clone, Debug)]
pub enum Optimizer {
    Muon(MuonState),
    SimplifiedMuon(Orthogonalizer),
    Gd,
    Nesterov(NesterovState),
    Adam(AdamState),
    AdamW(AdamState),
}

/// Result of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub w: Matrix,
    /// Orthogonalized update direction, for the Muon family.
    pub direction: Option<Matrix>,
}

impl Optimizer {
    pub fn step(&mut self, w: &Matrix, g: &Matrix, eta: f64) -> Result<StepOutput, OptimError> {
        match self {
            Optimizer::Muon(state) => {
                let s = state.step(w, g, eta)?;
                Ok(StepOutput {
                    w: s.w,
                    direction: Some(s.direction),
                })
            }
            Optimizer::SimplifiedMuon(orth) => {
                check_shapes(w, g)?;
                check_eta(eta)?;
                let o = orth.apply(g);
                let mut next = w.clone();
                next.axpy(-eta, &o);
                Ok(StepOutput {
                    w: next,
                    direction: Some(o),
                })
            }
            Optimizer::Gd => Ok(StepOutput {
                w: gd_step(w, g, eta)?,
                direction: None,
            }),
            Optimizer::Nesterov(state) => {
                let mu = state.mu;
                Ok(StepOutput {
                    w: gd_nesterov_step(state, w, g, eta, mu)?,
                    direction: None,
                })
            }
            Optimizer::Adam(state) => Ok(StepOutput {
                w: adam_step(state, w, g, eta)?,
                direction: None,
            }),
            Optimizer::AdamW(state) => Ok(StepOutput {
                w: adamw_step(state, w, g, eta)?,
                direction: None,
            }),
        }
    }
}
