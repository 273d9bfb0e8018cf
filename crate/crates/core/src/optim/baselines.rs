use serde::{Deserialize, Serialize};

use super::{check_eta, check_shapes, OptimError};
use crate::matcore::Matrix;

pub const DEFAULT_NESTEROV_MU: f64 = 0.9;

/// W − ηG.
pub fn gd_step(w: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix, OptimError> {
    check_shapes(w, g)?;
    check_eta(eta)?;
    let mut next = w.clone();
    next.axpy(-eta, g);
    Ok(next)
}

/// Velocity buffer for Nesterov-accelerated gradient descent.
#[derive(Clone, Debug)]
pub struct NesterovState {
    pub mu: f64,
    velocity: Option<Matrix>,
}

impl NesterovState {
    pub fn new(mu: f64) -> Result<Self, OptimError> {
        if !(0.0..1.0).contains(&mu) {
            return Err(OptimError::InvalidHyperparameter(format!("momentum {mu} not in [0, 1)")));
        }
        Ok(Self { mu, velocity: None })
    }
}

/// v ← μv + G;  W ← W − η(G + μv).
pub fn gd_nesterov_step(
    state: &mut NesterovState,
    w: &Matrix,
    g: &Matrix,
    eta: f64,
    mu: f64,
) -> Result<Matrix, OptimError> {
    check_shapes(w, g)?;
    check_eta(eta)?;
    let v = match state.velocity.take() {
        None => g.clone(),
        Some(prev) => {
            check_shapes(&prev, g)?;
            let mut v = prev.scale(mu);
            v.axpy(1.0, g);
            v
        }
    };
    let mut next = w.clone();
    next.axpy(-eta, g);
    next.axpy(-eta * mu, &v);
    state.velocity = Some(v);
    Ok(next)
}

/// Adam / AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay; used by AdamW only.
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment buffers and bias-correction counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub params: AdamParams,
    m: Option<Matrix>,
    v: Option<Matrix>,
    t: u32,
}

impl AdamState {
    pub fn new(params: AdamParams) -> Result<Self, OptimError> {
        let ok = (0.0..1.0).contains(&params.beta1)
            && (0.0..1.0).contains(&params.beta2)
            && params.eps > 0.0
            && params.weight_decay >= 0.0;
        if !ok {
            return Err(OptimError::InvalidHyperparameter(format!("{params:?}")));
        }
        Ok(Self {
            params,
            m: None,
            v: None,
            t: 0,
        })
    }

    /// Bias-corrected m̂ / (√v̂ + ε) after absorbing `g`.
    fn direction(&mut self, g: &Matrix) -> Matrix {
        let AdamParams { beta1, beta2, eps, .. } = self.params;
        let mut m = self.m.take().unwrap_or_else(|| Matrix::zeros(g.rows(), g.cols()));
        let mut v = self.v.take().unwrap_or_else(|| Matrix::zeros(g.rows(), g.cols()));
        m.scale_mut(beta1);
        m.axpy(1.0 - beta1, g);
        v = v.zip_with(g, |vi, gi| beta2 * vi + (1.0 - beta2) * gi * gi);
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let dir = m.zip_with(&v, |mi, vi| (mi / c1) / ((vi / c2).sqrt() + eps));
        self.m = Some(m);
        self.v = Some(v);
        dir
    }
}

pub fn adam_step(state: &mut AdamState, w: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix, OptimError> {
    check_shapes(w, g)?;
    check_eta(eta)?;
    let dir = state.direction(g);
    let mut next = w.clone();
    next.axpy(-eta, &dir);
    Ok(next)
}

/// Adam with decoupled weight decay: W ← W − η(dir + λW).
pub fn adamw_step(state: &mut AdamState, w: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix, OptimError> {
    check_shapes(w, g)?;
    check_eta(eta)?;
    let dir = state.direction(g);
    let mut next = w.scale(1.0 - eta * state.params.weight_decay);
    next.axpy(-eta, &dir);
    Ok(next)
}
