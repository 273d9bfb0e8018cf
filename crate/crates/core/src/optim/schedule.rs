use serde::{Deserialize, Serialize};

use super::OptimError;

/// β used when the noise level is zero and the theory only asks for β = O(1).
pub const DETERMINISTIC_BETA: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant { eta: f64 },
    /// η = √((1−β)Δ / (rTL)).
    TheoryNonconvexL { delta: f64, r: usize, t_total: usize, l: f64, beta: f64 },
    /// η = √((1−β)Δ / (T L_*)).
    TheoryNonconvexLstar { delta: f64, t_total: usize, l_star: f64, beta: f64 },
    /// η_t = ‖∇f(W_t)‖_* / (rL).
    AdaptiveStarL { r: usize, l: f64 },
    /// η_t = ‖∇f(W_t)‖_* / L_*.
    AdaptiveStarLstar { l_star: f64 },
    /// η = √(2Δ / (JT)).
    TheoryJ { delta: f64, j: f64, t_total: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BetaRule {
    Fixed { beta: f64 },
    /// 1−β = min{√(LΔ)/(σ√T), 1}; with `r` set, 1−β = min{√(L_*Δ)/(σ√(rT)), 1}.
    TheoryBeta { smoothness: f64, delta: f64, sigma: f64, t_total: usize, r: Option<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub beta_rule: BetaRule,
}

impl Schedule {
    pub fn constant(eta: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant { eta },
            beta_rule: BetaRule::Fixed { beta: 0.0 },
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(
            self.kind,
            ScheduleKind::AdaptiveStarL { .. } | ScheduleKind::AdaptiveStarLstar { .. }
        )
    }
}

/// Per-step inputs to a schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EtaContext {
    pub t: usize,
    pub grad_nuc: Option<f64>,
    pub grad_fro: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<f64, OptimError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(OptimError::Schedule(format!("{name} must be positive and finite, got {v}")))
    }
}

fn positive_count(name: &str, v: usize) -> Result<f64, OptimError> {
    if v > 0 {
        Ok(v as f64)
    } else {
        Err(OptimError::Schedule(format!("{name} must be at least 1")))
    }
}

fn beta_ok(beta: f64) -> Result<f64, OptimError> {
    if (0.0..1.0).contains(&beta) {
        Ok(beta)
    } else {
        Err(OptimError::Schedule(format!("beta {beta} not in [0, 1)")))
    }
}

fn grad_nuc(ctx: &EtaContext) -> Result<f64, OptimError> {
    match ctx.grad_nuc {
        Some(g) if g >= 0.0 && g.is_finite() => Ok(g),
        Some(g) => Err(OptimError::Schedule(format!("invalid gradient nuclear norm {g}"))),
        None => Err(OptimError::Schedule("adaptive schedule needs the gradient nuclear norm".into())),
    }
}

/// Stepsize for the step described by `ctx`.
pub fn next_eta(schedule: &Schedule, ctx: &EtaContext) -> Result<f64, OptimError> {
    match schedule.kind {
        ScheduleKind::Constant { eta } => {
            if eta >= 0.0 && eta.is_finite() {
                Ok(eta)
            } else {
                Err(OptimError::Schedule(format!("constant stepsize {eta}")))
            }
        }
        ScheduleKind::TheoryNonconvexL { delta, r, t_total, l, beta } => {
            let (delta, r, t, l, beta) = (
                positive("delta", delta)?,
                positive_count("r", r)?,
                positive_count("T", t_total)?,
                positive("L", l)?,
                beta_ok(beta)?,
            );
            Ok(((1.0 - beta) * delta / (r * t * l)).sqrt())
        }
        ScheduleKind::TheoryNonconvexLstar { delta, t_total, l_star, beta } => {
            let (delta, t, ls, beta) = (
                positive("delta", delta)?,
                positive_count("T", t_total)?,
                positive("L_*", l_star)?,
                beta_ok(beta)?,
            );
            Ok(((1.0 - beta) * delta / (t * ls)).sqrt())
        }
        ScheduleKind::AdaptiveStarL { r, l } => {
            let (r, l) = (positive_count("r", r)?, positive("L", l)?);
            Ok(grad_nuc(ctx)? / (r * l))
        }
        ScheduleKind::AdaptiveStarLstar { l_star } => Ok(grad_nuc(ctx)? / positive("L_*", l_star)?),
        ScheduleKind::TheoryJ { delta, j, t_total } => {
            let (delta, j, t) = (positive("delta", delta)?, positive("J", j)?, positive_count("T", t_total)?);
            Ok((2.0 * delta / (j * t)).sqrt())
        }
    }
}

/// Momentum parameter implied by a β-rule.
pub fn next_beta(rule: &BetaRule) -> Result<f64, OptimError> {
    match *rule {
        BetaRule::Fixed { beta } => beta_ok(beta),
        BetaRule::TheoryBeta { smoothness, delta, sigma, t_total, r } => {
            let (s, delta, t) = (
                positive("smoothness", smoothness)?,
                positive("delta", delta)?,
                positive_count("T", t_total)?,
            );
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(OptimError::Schedule(format!("sigma {sigma}")));
            }
            if sigma == 0.0 {
                return Ok(DETERMINISTIC_BETA);
            }
            let denom = match r {
                Some(r) => sigma * (positive_count("r", r)? * t).sqrt(),
                None => sigma * t.sqrt(),
            };
            let one_minus = ((s * delta).sqrt() / denom).min(1.0);
            Ok(1.0 - one_minus)
        }
    }
}
