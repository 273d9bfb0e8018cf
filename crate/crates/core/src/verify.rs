//! Numerical checks of convergence bounds and norm inequalities.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{j_t, vonneumann_bound, weighted_j_tilde, DiagError};
use crate::matcore::random::{
    derive_seed, gaussian_matrix, random_orthogonal, random_orthonormal_columns, random_spd, rng_from_seed, uniform_matrix,
};
use crate::matcore::{
    frobenius_norm, kron, lambda_norm_unchecked, matvec, nuclear_norm, operator_norm, polar, singular_values, vec_row,
    Matrix,
};
use crate::optim::{next_eta, EtaContext, MuonState, OptimError, Orthogonalizer, Schedule, ScheduleKind};
use crate::problems::{quadratic_new, stochastic_oracle, KroneckerQuadratic, Problem, ProblemError, QuadraticScale};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("check refused: {0}")]
    Refused(String),
    #[error("missing problem constant: {0}")]
    MissingConstant(&'static str),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Diagnostics(#[from] DiagError),
}

/// One failed inequality. `margin` is lhs − rhs (positive means violated).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: usize,
    pub step: Option<usize>,
    pub label: String,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub instances: usize,
    pub comparisons: usize,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
    /// Largest lhs − rhs seen (negative when every comparison had room to spare).
    pub worst_margin: f64,
    /// Largest normalized residual, for identity checks.
    pub max_residual: Option<f64>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            instances: 0,
            comparisons: 0,
            tolerance,
            violations: Vec::new(),
            worst_margin: f64::NEG_INFINITY,
            max_residual: None,
            notes: Vec::new(),
            pass: true,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
        self
    }

    /// Records `lhs ≤ rhs` with absolute slack `slack`.
    pub fn compare(&mut self, instance: usize, step: Option<usize>, label: &str, lhs: f64, rhs: f64, slack: f64) {
        self.comparisons += 1;
        let margin = lhs - rhs;
        if margin.is_nan() || margin > self.worst_margin {
            self.worst_margin = margin;
        }
        if margin.is_nan() || margin > slack {
            self.violations.push(Violation {
                instance,
                step,
                label: label.to_string(),
                margin,
            });
        }
    }

    /// Records a residual that must stay within the tolerance.
    pub fn residual(&mut self, instance: usize, step: Option<usize>, label: &str, residual: f64) {
        self.comparisons += 1;
        let cur = self.max_residual.unwrap_or(0.0);
        if residual.is_nan() || residual > cur {
            self.max_residual = Some(residual);
        }
        let margin = residual - self.tolerance;
        if margin.is_nan() || margin > self.worst_margin {
            self.worst_margin = margin;
        }
        if residual.is_nan() || residual > self.tolerance {
            self.violations.push(Violation {
                instance,
                step,
                label: label.to_string(),
                margin,
            });
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.violations.is_empty();
        if self.worst_margin == f64::NEG_INFINITY {
            self.worst_margin = 0.0;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Which stepsize rule produced a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSchedule {
    Constant,
    AdaptiveL,
    AdaptiveLstar,
    Other,
}

impl TraceSchedule {
    pub fn of(schedule: &Schedule) -> Self {
        match schedule.kind {
            ScheduleKind::Constant { .. } => TraceSchedule::Constant,
            ScheduleKind::AdaptiveStarL { .. } => TraceSchedule::AdaptiveL,
            ScheduleKind::AdaptiveStarLstar { .. } => TraceSchedule::AdaptiveLstar,
            _ => TraceSchedule::Other,
        }
    }
}

/// A deterministic run: iterates W_0..W_T, logged values and stepsizes.
#[derive(Clone, Debug)]
pub struct Trace {
    pub iterates: Vec<Matrix>,
    pub values: Vec<f64>,
    pub etas: Vec<f64>,
    pub simplified_muon: bool,
    pub schedule: TraceSchedule,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.etas.len()
    }
}

/// Runs Simplified Muon (SVD polar factor of the exact gradient) for `steps` steps.
pub fn simplified_muon_trace<P: Problem + ?Sized>(
    problem: &P,
    w0: Matrix,
    schedule: &Schedule,
    steps: usize,
) -> Result<Trace, VerifyError> {
    problem.check_shape(&w0)?;
    let mut iterates = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut etas = Vec::with_capacity(steps);
    let mut w = w0;
    for t in 0..=steps {
        let (f, g) = problem.value_and_grad(&w);
        values.push(f);
        if t == steps {
            iterates.push(w);
            break;
        }
        let pf = polar(&g);
        let ctx = EtaContext {
            t,
            grad_nuc: Some(pf.nuclear_norm()),
            grad_fro: Some(frobenius_norm(&g)),
        };
        let eta = next_eta(schedule, &ctx)?;
        let mut next = w.clone();
        next.axpy(-eta, &pf.o);
        iterates.push(w);
        etas.push(eta);
        w = next;
    }
    Ok(Trace {
        iterates,
        values,
        etas,
        simplified_muon: true,
        schedule: TraceSchedule::of(schedule),
    })
}

fn require(v: Option<f64>, name: &'static str) -> Result<f64, VerifyError> {
    v.ok_or(VerifyError::MissingConstant(name))
}

fn check_trace_shape(trace: &Trace) -> Result<(), VerifyError> {
    let t = trace.etas.len();
    if trace.iterates.len() != t + 1 || trace.values.len() != t + 1 {
        return Err(VerifyError::Refused(format!(
            "trace has {} iterates and {} values for {} steps",
            trace.iterates.len(),
            trace.values.len(),
            t
        )));
    }
    Ok(())
}

/// f(W_{t+1}) = f(W_t) − η‖∇f(W_t)‖_* + η²J_t/2 on a quadratic, step by step.
pub fn check_quadratic_taylor_identity<P: Problem + ?Sized>(trace: &Trace, problem: &P) -> Result<CheckReport, VerifyError> {
    if !problem.is_quadratic() {
        return Err(VerifyError::Refused("the identity is exact only for quadratic objectives".into()));
    }
    if !trace.simplified_muon {
        return Err(VerifyError::Refused("trace must come from Simplified Muon".into()));
    }
    check_trace_shape(trace)?;
    let mut report = CheckReport::new("quadratic-taylor-identity", 1e-9).param("steps", trace.steps());
    report.instances = 1;
    for t in 0..trace.steps() {
        let w = &trace.iterates[t];
        let g = problem.grad(w);
        let pf = polar(&g);
        let eta = trace.etas[t];
        let nuc = pf.nuclear_norm();
        let j = pf.o.dot(&problem.hvp(w, &pf.o));
        let (f0, f1) = (trace.values[t], trace.values[t + 1]);
        let rhs = f0 - eta * nuc + 0.5 * eta * eta * j;
        let scale = f0.abs().max(f1.abs()).max(eta * nuc).max(0.5 * eta * eta * j.abs());
        let residual = if scale > 0.0 { (f1 - rhs).abs() / scale } else { 0.0 };
        report.residual(0, Some(t), "taylor", residual);
    }
    Ok(report.finish())
}

/// Smoothness constant used by a per-step descent inequality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentBound {
    /// f_{t+1} ≤ f_t − η‖∇f‖_* + rLη²/2.
    ConvexL,
    /// f_{t+1} ≤ f_t − η‖∇f‖_* + L_*η²/2.
    ConvexLstar,
}

fn smoothness<P: Problem + ?Sized>(problem: &P, use_l_star: bool) -> Result<f64, VerifyError> {
    let meta = problem.meta();
    if use_l_star {
        require(meta.l_star, "L_*")
    } else {
        let (m, n) = problem.shape();
        Ok(m.min(n) as f64 * require(meta.l, "L")?)
    }
}

pub fn check_descent_inequalities<P: Problem + ?Sized>(
    trace: &Trace,
    problem: &P,
    which: DescentBound,
) -> Result<CheckReport, VerifyError> {
    if !trace.simplified_muon {
        return Err(VerifyError::Refused("trace must come from Simplified Muon".into()));
    }
    check_trace_shape(trace)?;
    let c = smoothness(problem, which == DescentBound::ConvexLstar)?;
    let name = match which {
        DescentBound::ConvexL => "descent-convex-l",
        DescentBound::ConvexLstar => "descent-convex-lstar",
    };
    let mut report = CheckReport::new(name, 1e-8).param("constant", c);
    report.instances = 1;
    for t in 0..trace.steps() {
        let nuc = nuclear_norm(&problem.grad(&trace.iterates[t]));
        let eta = trace.etas[t];
        let (f0, f1) = (trace.values[t], trace.values[t + 1]);
        let bound = f0 - eta * nuc + 0.5 * c * eta * eta;
        let slack = 1e-8 * 1f64.max(f0.abs()).max(f1.abs());
        report.compare(0, Some(t), "descent", f1, bound, slack);
    }
    Ok(report.finish())
}

fn trajectory_d_op(trace: &Trace, w_star: &Matrix) -> f64 {
    trace
        .iterates
        .iter()
        .map(|w| {
            let d = w.sub(w_star);
            if d.is_zero() {
                0.0
            } else {
                operator_norm(&d)
            }
        })
        .fold(0.0, f64::max)
}

/// Adaptive-stepsize rate: f(W_t) − f* ≤ 2CΔD²/(2CD² + tΔ), C = rL or L_*.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveBound {
    L,
    Lstar,
}

pub fn check_adaptive_rate_bound<P: Problem + ?Sized>(
    trace: &Trace,
    problem: &P,
    which: AdaptiveBound,
) -> Result<CheckReport, VerifyError> {
    let expected = match which {
        AdaptiveBound::L => TraceSchedule::AdaptiveL,
        AdaptiveBound::Lstar => TraceSchedule::AdaptiveLstar,
    };
    if trace.schedule != expected {
        return Err(VerifyError::Refused(format!(
            "trace schedule {:?} does not match {:?}",
            trace.schedule, expected
        )));
    }
    check_trace_shape(trace)?;
    let c = smoothness(problem, which == AdaptiveBound::Lstar)?;
    let f_star = require(problem.meta().f_star, "f*")?;
    let w_star = problem.meta().w_star.as_ref().ok_or(VerifyError::MissingConstant("W*"))?;
    let d_op = trajectory_d_op(trace, w_star);
    let delta = trace.values[0] - f_star;
    let name = match which {
        AdaptiveBound::L => "adaptive-rate-l",
        AdaptiveBound::Lstar => "adaptive-rate-lstar",
    };
    let mut report = CheckReport::new(name, 1e-8)
        .param("constant", c)
        .param("d_op", d_op)
        .param("delta", delta);
    report.instances = 1;
    for (t, &f) in trace.values.iter().enumerate() {
        let bound = if delta <= 0.0 {
            0.0
        } else {
            let cd2 = 2.0 * c * d_op * d_op;
            cd2 * delta / (cd2 + t as f64 * delta)
        };
        let slack = 1e-8 * bound.abs().max(f_star.abs());
        report.compare(0, Some(t), "rate", f - f_star, bound, slack);
    }
    Ok(report.finish())
}

/// Final-iterate bound for a constant stepsize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantStepBound {
    /// (1−η/D)^T Δ + rL·D·η/2.
    ConvexL,
    /// (1−η/D)^T Δ + L_*·D·η/2.
    ConvexLstar,
    /// (1−η/D)^T Δ + η²·J̃·T/2 (third-order term zero on quadratics).
    ConvexJ,
}

/// Both sides of a final-iterate bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalBound {
    pub gap: f64,
    pub bound: f64,
    pub d_op: f64,
    pub j_tilde: Option<f64>,
}

pub fn constant_step_bound<P: Problem + ?Sized>(
    trace: &Trace,
    problem: &P,
    which: ConstantStepBound,
) -> Result<FinalBound, VerifyError> {
    check_trace_shape(trace)?;
    let steps = trace.steps();
    let eta = trace.etas.first().copied().unwrap_or(0.0);
    if trace.etas.iter().any(|&e| e != eta) {
        return Err(VerifyError::Refused("stepsize is not constant".into()));
    }
    let f_star = require(problem.meta().f_star, "f*")?;
    let w_star = problem.meta().w_star.as_ref().ok_or(VerifyError::MissingConstant("W*"))?;
    let d_op = trajectory_d_op(trace, w_star);
    let delta = trace.values[0] - f_star;
    let gap = trace.values[steps] - f_star;
    let contraction = if d_op > 0.0 { (1.0 - eta / d_op).powi(steps as i32) } else { 1.0 };
    let (extra, j_tilde) = match which {
        ConstantStepBound::ConvexL => (0.5 * smoothness(problem, false)? * d_op * eta, None),
        ConstantStepBound::ConvexLstar => (0.5 * smoothness(problem, true)? * d_op * eta, None),
        ConstantStepBound::ConvexJ => {
            if !problem.is_quadratic() {
                return Err(VerifyError::Refused("the J bound with s = 0 needs a quadratic".into()));
            }
            if steps == 0 || eta == 0.0 {
                (0.0, None)
            } else {
                let js: Vec<f64> = trace.iterates[..steps]
                    .iter()
                    .map(|w| {
                        let o = polar(&problem.grad(w)).o;
                        o.dot(&problem.hvp(w, &o))
                    })
                    .collect();
                let jt = weighted_j_tilde(&js, eta, d_op)?;
                (0.5 * eta * eta * jt * steps as f64, Some(jt))
            }
        }
    };
    Ok(FinalBound {
        gap,
        bound: contraction * delta + extra,
        d_op,
        j_tilde,
    })
}

pub fn check_constant_step_linear_bound<P: Problem + ?Sized>(
    trace: &Trace,
    problem: &P,
    which: ConstantStepBound,
) -> Result<CheckReport, VerifyError> {
    if !trace.simplified_muon {
        return Err(VerifyError::Refused("trace must come from Simplified Muon".into()));
    }
    check_trace_shape(trace)?;
    let name = match which {
        ConstantStepBound::ConvexL => "constant-step-l",
        ConstantStepBound::ConvexLstar => "constant-step-lstar",
        ConstantStepBound::ConvexJ => "constant-step-j",
    };
    let eta = trace.etas.first().copied().unwrap_or(0.0);
    let mut report = CheckReport::new(name, 1e-8).param("eta", eta).param("steps", trace.steps());
    report.instances = 1;
    if let (Some(ws), false) = (problem.meta().w_star.as_ref(), trace.etas.is_empty()) {
        let d_op = trajectory_d_op(trace, ws);
        if eta > d_op {
            report.notes.push(format!("eta {eta} exceeds D_op {d_op}; bound is vacuous"));
            return Ok(report.param("d_op", d_op).finish());
        }
    }
    let fb = constant_step_bound(trace, problem, which)?;
    report = report.param("d_op", fb.d_op).param("gap", fb.gap).param("bound", fb.bound);
    if let Some(jt) = fb.j_tilde {
        report = report.param("j_tilde", jt);
    }
    let slack = 1e-8 * fb.bound.abs().max(1e-300);
    report.compare(0, Some(trace.steps()), "final", fb.gap, fb.bound, slack);
    Ok(report.finish())
}

/// Random (A, Λ) instances against the Frobenius/nuclear bracket, the
/// Λ-norm inequalities and quadratic smoothness under both norm pairs.
pub fn check_norm_lemmas(n_instances: usize, max_dim: usize, seed: u64) -> Result<CheckReport, VerifyError> {
    if max_dim == 0 || max_dim > 20 {
        return Err(VerifyError::Refused(format!("dimension bound {max_dim} outside 1..=20")));
    }
    let tol = 1e-9;
    let mut report = CheckReport::new("norm-lemmas", tol)
        .param("instances", n_instances)
        .param("max_dim", max_dim)
        .param("seed", seed);
    report.instances = n_instances;
    for i in 0..n_instances {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let m = rng.random_range(1..=max_dim);
        let n = rng.random_range(1..=max_dim);
        let mut a = gaussian_matrix(&mut rng, m, n);
        match i % 10 {
            // exercise rank-deficient and zero inputs too
            0 => a = Matrix::zeros(m, n),
            1 | 2 => {
                let k = rng.random_range(1..=m.min(n));
                let b = gaussian_matrix(&mut rng, k, n);
                a = gaussian_matrix(&mut rng, m, k).matmul(&b);
            }
            _ => {}
        }
        let r = m.min(n) as f64;
        // Λ = R diag(λ) Rᵀ with log-uniform λ over six decades.
        let lam: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        let rot = random_orthogonal(&mut rng, n);
        let big = rot.scale_columns(&lam).matmul_t(&rot).symmetrize();
        let inv_lam: Vec<f64> = lam.iter().map(|v| 1.0 / v).collect();
        let big_inv = rot.scale_columns(&inv_lam).matmul_t(&rot).symmetrize();
        let lam_op = lam.iter().copied().fold(0.0, f64::max);
        let lam_nuc: f64 = lam.iter().sum();

        let sv = singular_values(&a);
        let a_f = frobenius_norm(&a);
        let a_nuc: f64 = sv.iter().sum();
        let a_op = sv[0];
        let a_lam = lambda_norm_unchecked(&a, &big);
        let a_lam_inv = lambda_norm_unchecked(&a, &big_inv);

        let mut cmp = |label: &str, lhs: f64, rhs: f64| {
            let slack = tol * lhs.abs().max(rhs.abs());
            report.compare(i, None, label, lhs, rhs, slack);
        };
        cmp("fro<=nuc", a_f, a_nuc);
        cmp("nuc<=sqrt(r)fro", a_nuc, r.sqrt() * a_f);
        cmp("nuc<=sqrt(nuc(L))|A|_Linv", a_nuc, lam_nuc.sqrt() * a_lam_inv);
        cmp("fro<=sqrt(op(L))|A|_Linv", a_f, lam_op.sqrt() * a_lam_inv);
        cmp("|A|_L<=sqrt(op(L))fro", a_lam, lam_op.sqrt() * a_f);
        cmp("|A|_L<=sqrt(nuc(L))op", a_lam, lam_nuc.sqrt() * a_op);

        // f(W) = ½ tr(W Λ Wᵀ): gradient W·Λ, Hessian I ⊗ Λ.
        let w1 = gaussian_matrix(&mut rng, m, n);
        let w2 = gaussian_matrix(&mut rng, m, n);
        let dw = w1.sub(&w2);
        let dg = dw.matmul(&big);
        let dg_sv = singular_values(&dg);
        let dw_sv = singular_values(&dw);
        cmp("smooth-fro", frobenius_norm(&dg), lam_op * frobenius_norm(&dw));
        cmp("smooth-spectral", dg_sv.iter().sum(), lam_nuc * dw_sv[0]);
    }
    Ok(report.finish())
}

/// J_t via Hessian-vector products against the explicit Kronecker quadratic
/// form, the congruence form ⟨UᵀPU, VᵀQV⟩ and the entry sum of
/// (U⊗V)ᵀH(U⊗V), plus the trace-inequality upper bound, on random
/// Kronecker-structured quadratics. Odd instances use indefinite P and Q.
pub fn check_kronecker_j_oracles(n_instances: usize, max_dim: usize, seed: u64) -> Result<CheckReport, VerifyError> {
    if max_dim == 0 || max_dim > 8 {
        return Err(VerifyError::Refused(format!("dimension bound {max_dim} outside 1..=8")));
    }
    let tol = 1e-9;
    let mut report = CheckReport::new("kronecker-j-oracles", tol)
        .param("instances", n_instances)
        .param("max_dim", max_dim)
        .param("seed", seed);
    report.instances = n_instances;
    for i in 0..n_instances {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let m = rng.random_range(1..=max_dim);
        let n = rng.random_range(1..=max_dim);
        let (p, q) = if i % 2 == 0 {
            (random_spd(&mut rng, m, 0.05, 5.0), random_spd(&mut rng, n, 0.05, 5.0))
        } else {
            let a = gaussian_matrix(&mut rng, m, m);
            let b = gaussian_matrix(&mut rng, n, n);
            (a.add(&a.transpose()).scale(0.5), b.add(&b.transpose()).scale(0.5))
        };
        let r = rng.random_range(1..=m.min(n));
        let u = random_orthonormal_columns(&mut rng, m, r);
        let v = random_orthonormal_columns(&mut rng, n, r);
        let o = u.matmul_t(&v);
        let w = gaussian_matrix(&mut rng, m, n);
        let problem = KroneckerQuadratic::new(p.clone(), q.clone())?;
        let j = j_t(&problem, &w, &o).value;

        let h = kron(&p, &q).map_err(ProblemError::from)?;
        let vo = vec_row(&o);
        let brute: f64 = vo.iter().zip(matvec(&h, &vo)).map(|(a, b)| a * b).sum();
        let congruence = u.t_matmul(&p).matmul(&u).dot(&v.t_matmul(&q).matmul(&v));
        let uv = kron(&u, &v).map_err(ProblemError::from)?;
        let a = uv.t_matmul(&h).matmul(&uv);
        let mut entries = 0.0;
        for k in 0..r {
            for l in 0..r {
                entries += a[(k * r + k, l * r + l)];
            }
        }
        let scale = j.abs().max(1.0);
        report.residual(i, None, "vec-quadratic", (j - brute).abs() / scale);
        report.residual(i, None, "congruence", (j - congruence).abs() / scale);
        report.residual(i, None, "entry-sum", (j - entries).abs() / scale);

        let bound = vonneumann_bound(&singular_values(&p), &singular_values(&q), r)?;
        report.compare(i, None, "trace-inequality", j, bound, tol * bound.abs().max(1.0));
    }
    Ok(report.finish())
}

/// Closed-form momentum-error bound √((1−β)/(1+β))·σ/√B + βᵗ·σ/√B.
pub fn momentum_error_bound(sigma: f64, batch: usize, beta: f64, t: usize) -> f64 {
    let s = sigma / (batch as f64).sqrt();
    ((1.0 - beta) / (1.0 + beta)).sqrt() * s + beta.powi(t as i32) * s
}

/// Mean ‖C_t − M_t‖_F over trials against 1.5× the closed-form bound, on a
/// fixed-parameter gradient stream (so C_t is the exact gradient).
pub fn check_momentum_error_lemma(
    sigma: f64,
    batch: usize,
    beta: f64,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<CheckReport, VerifyError> {
    if trials < 50 {
        return Err(VerifyError::Refused(format!("{trials} trials is too few (need at least 50)")));
    }
    if !(0.0..1.0).contains(&beta) || batch == 0 || !(sigma >= 0.0) {
        return Err(VerifyError::Refused("need beta in [0, 1), batch >= 1, sigma >= 0".into()));
    }
    let slack_factor = 1.5;
    let mut report = CheckReport::new("momentum-error-lemma", 0.0)
        .param("sigma", sigma)
        .param("batch", batch)
        .param("beta", beta)
        .param("steps", steps)
        .param("trials", trials)
        .param("slack_factor", slack_factor);
    report.instances = trials;

    let mut rng = rng_from_seed(seed);
    let q = crate::matcore::random::random_spd(&mut rng, 4, 0.5, 2.0);
    let w_star = uniform_matrix(&mut rng, 4, 6, -1.0, 1.0);
    let w = gaussian_matrix(&mut rng, 4, 6);
    let problem = quadratic_new(q, w_star, QuadraticScale::Half)?;
    let exact = problem.grad(&w);

    let mut mean_err = vec![0.0; steps + 1];
    for trial in 0..trials {
        let mut oracle = stochastic_oracle(&problem, sigma, batch, derive_seed(seed, trial as u64 + 1))?;
        let mut c = exact.clone();
        let mut m = oracle.sample(&w);
        mean_err[0] += frobenius_norm(&c.sub(&m));
        for err in mean_err.iter_mut().skip(1) {
            let g = oracle.sample(&w);
            c = c.scale(beta);
            c.axpy(1.0 - beta, &exact);
            m = m.scale(beta);
            m.axpy(1.0 - beta, &g);
            *err += frobenius_norm(&c.sub(&m));
        }
    }
    for (t, err) in mean_err.iter_mut().enumerate() {
        *err /= trials as f64;
        let bound = slack_factor * momentum_error_bound(sigma, batch, beta, t);
        report.compare(0, Some(t), "mean-error", *err, bound, 0.0);
    }
    Ok(report.finish())
}

/// Which smoothness constant the nonconvex stochastic bound uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconvexBound {
    L,
    Lstar,
}

/// Right-hand side of the averaged nuclear-norm bound for Muon with constant η.
#[allow(clippy::too_many_arguments)]
pub fn nonconvex_bound_rhs(
    which: NonconvexBound,
    mean_decrease: f64,
    steps: usize,
    eta: f64,
    beta: f64,
    sigma: f64,
    batch: usize,
    r: usize,
    smoothness: f64,
) -> f64 {
    let t = steps as f64;
    let r = r as f64;
    let b = batch as f64;
    let noise = 2.0 * sigma * (r * (1.0 - beta)).sqrt() / (b * (1.0 + beta)).sqrt()
        + 2.0 * beta * sigma * r.sqrt() / ((1.0 - beta) * t * b.sqrt());
    let smooth = match which {
        NonconvexBound::L => smoothness * r * eta / 2.0 + 2.0 * r * eta * beta * smoothness / (1.0 - beta),
        NonconvexBound::Lstar => smoothness * eta / 2.0 + 2.0 * eta * beta * smoothness / (1.0 - beta),
    };
    mean_decrease / (t * eta) + smooth + noise
}

/// Settings for [`check_nonconvex_stochastic_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonconvexRun {
    pub eta: f64,
    pub beta: f64,
    pub sigma: f64,
    pub batch: usize,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
}

/// (1/T)Σ E‖∇f(W_t)‖_* against the displayed bound, expectations replaced by
/// averages over seeded runs and the right side inflated by 1.5×.
pub fn check_nonconvex_stochastic_bound<P: Problem + ?Sized>(
    problem: &P,
    w0: &Matrix,
    which: NonconvexBound,
    cfg: &NonconvexRun,
) -> Result<CheckReport, VerifyError> {
    if cfg.runs < 20 {
        return Err(VerifyError::Refused(format!("{} runs is too few (need at least 20)", cfg.runs)));
    }
    if cfg.steps == 0 || !(cfg.eta > 0.0) {
        return Err(VerifyError::Refused("need steps >= 1 and eta > 0".into()));
    }
    problem.check_shape(w0)?;
    let smooth = match which {
        NonconvexBound::L => require(problem.meta().l, "L")?,
        NonconvexBound::Lstar => require(problem.meta().l_star, "L_*")?,
    };
    let (m, n) = problem.shape();
    let mut mean_nuc = 0.0;
    let mut mean_decrease = 0.0;
    for run in 0..cfg.runs {
        let mut oracle = stochastic_oracle(problem, cfg.sigma, cfg.batch, derive_seed(cfg.seed, run as u64))?;
        let mut state = MuonState::new(cfg.beta, Orthogonalizer::Svd)?;
        let mut w = w0.clone();
        let f0 = problem.value(&w);
        let mut acc = 0.0;
        for _ in 0..cfg.steps {
            acc += nuclear_norm(&problem.grad(&w));
            let g = oracle.sample(&w);
            w = state.step(&w, &g, cfg.eta)?.w;
        }
        mean_nuc += acc / cfg.steps as f64;
        mean_decrease += f0 - problem.value(&w);
    }
    mean_nuc /= cfg.runs as f64;
    mean_decrease /= cfg.runs as f64;
    let rhs = nonconvex_bound_rhs(
        which,
        mean_decrease,
        cfg.steps,
        cfg.eta,
        cfg.beta,
        cfg.sigma,
        cfg.batch,
        m.min(n),
        smooth,
    );
    let name = match which {
        NonconvexBound::L => "nonconvex-stochastic-l",
        NonconvexBound::Lstar => "nonconvex-stochastic-lstar",
    };
    let mut report = CheckReport::new(name, 0.0)
        .param("run", cfg)
        .param("mean_grad_nuc", mean_nuc)
        .param("rhs", rhs)
        .param("slack_factor", 1.5);
    report.instances = cfg.runs;
    report.compare(0, Some(cfg.steps), "average", mean_nuc, 1.5 * rhs, 0.0);
    Ok(report.finish())
}
