//! Per-iteration Hessian and norm diagnostics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcore::random::{gaussian_matrix, rng_from_seed};
use crate::matcore::{frobenius_norm, operator_norm, polar, singular_values, spectral_norm_with, Matrix, PowerIteration};
use crate::problems::Problem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("no values to aggregate")]
    Empty,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Scalar quadratic-form value, flagged when its direction was zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadform {
    pub value: f64,
    pub degenerate: bool,
}

/// J_t = ⟨O, hvp(W, O)⟩.
pub fn j_t<P: Problem + ?Sized>(problem: &P, w: &Matrix, o: &Matrix) -> Quadform {
    if o.is_zero() {
        return Quadform {
            value: 0.0,
            degenerate: true,
        };
    }
    Quadform {
        value: o.dot(&problem.hvp(w, o)),
        degenerate: false,
    }
}

/// Largest-magnitude curvature estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Defaults for L_t: 100 iterations, tolerance 1e−6.
pub fn l_t_defaults(seed: u64) -> PowerIteration {
    PowerIteration {
        tol: 1e-6,
        max_iter: 100,
        seed,
    }
}

/// L_t = max |eigenvalue| of D ↦ hvp(W, D), by power iteration.
pub fn l_t<P: Problem + ?Sized>(problem: &P, w: &Matrix, cfg: &PowerIteration) -> CurvatureEstimate {
    let (m, n) = problem.shape();
    let mut rng = rng_from_seed(cfg.seed);
    let mut v = gaussian_matrix(&mut rng, m, n);
    v.scale_mut(1.0 / frobenius_norm(&v));
    let mut est = 0.0;
    for it in 1..=cfg.max_iter {
        let hv = problem.hvp(w, &v);
        let next = frobenius_norm(&hv);
        if next == 0.0 {
            return CurvatureEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            };
        }
        let done = it > 1 && (next - est).abs() <= cfg.tol * next;
        est = next;
        if done {
            return CurvatureEstimate {
                value: est,
                iterations: it,
                converged: true,
            };
        }
        v = hv.scale(1.0 / next);
    }
    CurvatureEstimate {
        value: est,
        iterations: cfg.max_iter,
        converged: false,
    }
}

/// Ĵ_t = ⟨polar(∇f(W_t) − ∇f(W_{t+1})), hvp(W_t, O_t)⟩.
pub fn hat_j_t<P: Problem + ?Sized>(
    problem: &P,
    w_t: &Matrix,
    o_t: &Matrix,
    grad_prev: &Matrix,
    grad_next: &Matrix,
) -> Quadform {
    let diff = grad_prev.sub(grad_next);
    if diff.is_zero() || o_t.is_zero() {
        return Quadform {
            value: 0.0,
            degenerate: true,
        };
    }
    let o_g = polar(&diff).o;
    Quadform {
        value: o_g.dot(&problem.hvp(w_t, o_t)),
        degenerate: false,
    }
}

/// Both sides of J_t/L_t ≤ ‖∇f‖_*²/‖∇f‖_F².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioCondition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn ratio_condition(j: f64, l: f64, grad_fro: f64, grad_nuc: f64) -> Result<RatioCondition, DiagError> {
    if !(l > 0.0) || !(grad_fro > 0.0) {
        return Err(DiagError::Degenerate(format!("L_t = {l}, ‖∇f‖_F = {grad_fro}")));
    }
    let lhs = j / l;
    let rhs = (grad_nuc / grad_fro).powi(2);
    Ok(RatioCondition {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
    })
}

/// J = (1/T) Σ J_t.
pub fn average_j(js: &[f64]) -> Result<f64, DiagError> {
    if js.is_empty() {
        return Err(DiagError::Empty);
    }
    Ok(js.iter().sum::<f64>() / js.len() as f64)
}

/// J̃ = (1/T) Σ_t (1 − η/D_op)^{T−1−t} J_t for J_0..J_{T−1}.
pub fn weighted_j_tilde(js: &[f64], eta: f64, d_op: f64) -> Result<f64, DiagError> {
    if js.is_empty() {
        return Err(DiagError::Empty);
    }
    if !(eta > 0.0 && d_op > 0.0 && eta <= d_op) {
        return Err(DiagError::InvalidArgument(format!("need 0 < eta <= D_op, got eta={eta}, D_op={d_op}")));
    }
    let base = 1.0 - eta / d_op;
    let t = js.len();
    // Horner form: walk backwards so the weight grows by one factor per step.
    let mut acc = 0.0;
    let mut weight = 1.0;
    for &j in js.iter().rev() {
        acc += weight * j;
        weight *= base;
    }
    Ok(acc / t as f64)
}

/// Σ_{i<r} σ_{p,i} σ_{q,i}.
pub fn vonneumann_bound(p_sv: &[f64], q_sv: &[f64], r: usize) -> Result<f64, DiagError> {
    if r > p_sv.len() || r > q_sv.len() {
        return Err(DiagError::InvalidArgument(format!(
            "rank {r} exceeds spectrum lengths {} and {}",
            p_sv.len(),
            q_sv.len()
        )));
    }
    let sorted = |s: &[f64]| s.windows(2).all(|w| w[0] >= w[1]);
    if !sorted(p_sv) || !sorted(q_sv) {
        return Err(DiagError::InvalidArgument("singular values must be nonincreasing".into()));
    }
    Ok(p_sv[..r].iter().zip(&q_sv[..r]).map(|(p, q)| p * q).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub fro: f64,
    pub op: f64,
}

pub fn distance_metrics(w: &Matrix, w_star: &Matrix) -> Distances {
    let d = w.sub(w_star);
    if d.is_zero() {
        return Distances { fro: 0.0, op: 0.0 };
    }
    Distances {
        fro: frobenius_norm(&d),
        op: operator_norm(&d),
    }
}

/// D_F²·L / (D_op²·L_*).
pub fn comparison_ratio(d_f: f64, d_op: f64, l: f64, l_star: f64) -> f64 {
    d_f * d_f * l / (d_op * d_op * l_star)
}

/// Singular values, nonincreasing.
pub fn spectrum(a: &Matrix) -> Vec<f64> {
    singular_values(a)
}

/// ‖A‖_F² / ‖A‖_op².
pub fn concentration_ratio(a: &Matrix) -> Result<f64, DiagError> {
    if a.is_zero() {
        return Err(DiagError::Degenerate("zero matrix has no concentration ratio".into()));
    }
    let op = spectral_norm_with(a, &PowerIteration::default())
        .map_err(|e| DiagError::InvalidArgument(e.to_string()))?
        .value;
    Ok((frobenius_norm(a) / op).powi(2))
}

/// Conditions noted on a logged step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFlags {
    /// Finite-difference Hessian evaluated within tolerance of a ReLU kink.
    pub fd_kink: bool,
    /// L_t power iteration did not converge.
    pub power_nonconverged: bool,
    /// Update direction or gradient difference was zero.
    pub degenerate_direction: bool,
    /// Loss exceeded the divergence guard; the run stops after this row.
    pub diverged: bool,
}

impl RecordFlags {
    pub fn is_empty(&self) -> bool {
        *self == RecordFlags::default()
    }

    /// `|`-separated flag names; empty when no flag is set.
    pub fn encode(&self) -> String {
        let mut names = Vec::new();
        if self.fd_kink {
            names.push("fd_kink");
        }
        if self.power_nonconverged {
            names.push("power_nonconverged");
        }
        if self.degenerate_direction {
            names.push("degenerate_direction");
        }
        if self.diverged {
            names.push("diverged");
        }
        names.join("|")
    }

    pub fn decode(s: &str) -> Result<Self, DiagError> {
        let mut flags = RecordFlags::default();
        for name in s.split('|').filter(|n| !n.is_empty()) {
            match name {
                "fd_kink" => flags.fd_kink = true,
                "power_nonconverged" => flags.power_nonconverged = true,
                "degenerate_direction" => flags.degenerate_direction = true,
                "diverged" => flags.diverged = true,
                other => return Err(DiagError::InvalidArgument(format!("unknown flag {other}"))),
            }
        }
        Ok(flags)
    }
}

/// One logged iteration. `t` indexes the iterate W_t; `eta` is the stepsize
/// used to leave it (absent on the final row).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub f: f64,
    pub grad_fro: f64,
    pub grad_nuc: f64,
    pub eta: Option<f64>,
    pub j_t: Option<f64>,
    pub l_t: Option<f64>,
    pub hat_j_t: Option<f64>,
    pub dist_fro: Option<f64>,
    pub dist_op: Option<f64>,
    pub ratio_lhs: Option<f64>,
    pub ratio_rhs: Option<f64>,
    pub flags: RecordFlags,
}

impl StepRecord {
    /// Whether the logged sides satisfy the ratio condition.
    pub fn ratio_ok(&self) -> Option<bool> {
        match (self.ratio_lhs, self.ratio_rhs) {
            (Some(l), Some(r)) => Some(l <= r * (1.0 + 1e-12)),
            _ => None,
        }
    }
}

/// Run-level aggregates derived from the step records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub final_f: f64,
    pub final_gap: Option<f64>,
    pub j_mean: Option<f64>,
    pub j_tilde: Option<f64>,
    pub d_f: Option<f64>,
    pub d_op: Option<f64>,
    pub comparison_ratio: Option<f64>,
    pub ratio_condition_fraction: Option<f64>,
    pub diverged: bool,
}

/// Constants the summary needs beyond the records.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SummaryInputs {
    pub l: Option<f64>,
    pub l_star: Option<f64>,
    pub f_star: Option<f64>,
    /// Constant stepsize, when the run used one (enables J̃).
    pub constant_eta: Option<f64>,
}

pub fn summarize(records: &[StepRecord], inputs: &SummaryInputs) -> Result<RunSummary, DiagError> {
    let last = records.last().ok_or(DiagError::Empty)?;
    let steps = last.t;
    let js: Vec<f64> = records.iter().filter_map(|r| r.j_t).collect();
    let j_mean = average_j(&js).ok();
    let fmax = |get: fn(&StepRecord) -> Option<f64>| records.iter().filter_map(get).reduce(f64::max);
    let d_f = fmax(|r| r.dist_fro);
    let d_op = fmax(|r| r.dist_op);

    // J̃ needs J_t at every step 0..T−1.
    let stepped: Vec<&StepRecord> = records.iter().filter(|r| r.t < steps).collect();
    let dense = stepped.len() == steps && stepped.iter().all(|r| r.j_t.is_some());
    let j_tilde = match (inputs.constant_eta, d_op, dense) {
        (Some(eta), Some(d), true) if steps > 0 && eta <= d => {
            let seq: Vec<f64> = stepped.iter().map(|r| r.j_t.expect("dense")).collect();
            weighted_j_tilde(&seq, eta, d).ok()
        }
        _ => None,
    };
    let comparison = match (d_f, d_op, inputs.l, inputs.l_star) {
        (Some(df), Some(dop), Some(l), Some(ls)) if dop > 0.0 && ls > 0.0 => Some(comparison_ratio(df, dop, l, ls)),
        _ => None,
    };
    let ratio_flags: Vec<bool> = records.iter().filter_map(|r| r.ratio_ok()).collect();
    let ratio_condition_fraction = if ratio_flags.is_empty() {
        None
    } else {
        Some(ratio_flags.iter().filter(|&&b| b).count() as f64 / ratio_flags.len() as f64)
    };
    Ok(RunSummary {
        steps,
        final_f: last.f,
        final_gap: inputs.f_star.map(|fs| last.f - fs),
        j_mean,
        j_tilde,
        d_f,
        d_op,
        comparison_ratio: comparison,
        ratio_condition_fraction,
        diverged: records.iter().any(|r| r.flags.diverged),
    })
}
