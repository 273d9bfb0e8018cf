//! Named verification checks run by `muonlab verify`.

use muonlab_core::matcore::random::{
    derive_seed, gaussian_matrix, matrix_with_singular_values, random_spd, rng_from_seed, uniform_matrix,
};
use muonlab_core::matcore::{
    nuclear_norm, operator_norm, orthogonalize_ns, orthogonalize_svd, polar, singular_values, Matrix,
};
use muonlab_core::optim::{BetaRule, Schedule, ScheduleKind};
use muonlab_core::problems::{make_ill_conditioned_q, quadratic_new, Quadratic, QuadraticScale, SpectrumProfile};
use muonlab_core::verify::{
    check_adaptive_rate_bound, check_constant_step_linear_bound, check_descent_inequalities,
    check_kronecker_j_oracles, check_momentum_error_lemma, check_nonconvex_stochastic_bound, check_norm_lemmas,
    check_quadratic_taylor_identity, simplified_muon_trace, AdaptiveBound, CheckReport, ConstantStepBound,
    DescentBound, NonconvexBound, NonconvexRun,
};
use muonlab_core::Problem;
use rand::Rng;

use crate::HarnessError;

pub const CHECKS: [&str; 10] = [
    "orthogonality",
    "newton-schulz",
    "norm-lemmas",
    "taylor",
    "descent",
    "adaptive",
    "constant-step",
    "kronecker",
    "momentum",
    "nonconvex",
];

/// Instance count used when the caller gives none.
pub fn default_instances(name: &str) -> usize {
    match name {
        "orthogonality" => 500,
        "newton-schulz" => 100,
        "norm-lemmas" => 1000,
        "taylor" => 1,
        "descent" => 5,
        "adaptive" | "constant-step" | "nonconvex" => 20,
        "kronecker" => 100,
        "momentum" => 200,
        _ => 1,
    }
}

pub fn run_check(name: &str, instances: Option<usize>, seed: u64) -> Result<CheckReport, HarnessError> {
    let n = instances.unwrap_or_else(|| default_instances(name));
    let report = match name {
        "orthogonality" => orthogonality(n, seed),
        "newton-schulz" => newton_schulz(n, seed),
        "norm-lemmas" => check_norm_lemmas(n, 8, seed)?,
        "taylor" => taylor(n, seed)?,
        "descent" => descent(n, seed)?,
        "adaptive" => adaptive(n, seed)?,
        "constant-step" => constant_step(n, seed)?,
        "kronecker" => check_kronecker_j_oracles(n, 6, seed)?,
        "momentum" => check_momentum_error_lemma(1.0, 1, 0.9, 50, n, seed)?,
        "nonconvex" => nonconvex(n, seed)?,
        other => {
            return Err(HarnessError::Usage(format!(
                "unknown check {other:?}; expected one of {}",
                CHECKS.join(", ")
            )))
        }
    };
    Ok(report.param("seed", seed))
}

/// Folds per-instance reports into one, renumbering instances.
fn merge(name: &str, tolerance: f64, parts: Vec<CheckReport>) -> CheckReport {
    let mut out = CheckReport::new(name, tolerance);
    out.worst_margin = f64::NEG_INFINITY;
    for (i, p) in parts.into_iter().enumerate() {
        out.instances += 1;
        out.comparisons += p.comparisons;
        if p.worst_margin.is_nan() || p.worst_margin > out.worst_margin {
            out.worst_margin = p.worst_margin;
        }
        if let Some(r) = p.max_residual {
            out.max_residual = Some(out.max_residual.map_or(r, |c: f64| c.max(r)));
        }
        out.violations.extend(p.violations.into_iter().map(|mut v| {
            v.instance = i;
            v
        }));
        out.notes.extend(p.notes.into_iter().map(|s| format!("instance {i} ({}): {s}", p.name)));
    }
    finish(out)
}

fn finish(mut r: CheckReport) -> CheckReport {
    r.pass = r.violations.is_empty();
    if r.worst_margin == f64::NEG_INFINITY {
        r.worst_margin = 0.0;
    }
    r
}

/// Polar factors of random matrices (shapes up to 64×96, some rank
/// deficient): nonzero singular values 1, ‖O‖_op = 1, ‖O‖_* = rank.
pub fn orthogonality(n: usize, seed: u64) -> CheckReport {
    let tol = 1e-10;
    let mut r = CheckReport::new("orthogonality", tol).param("instances", n);
    r.instances = n;
    for i in 0..n {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let (m, k) = (rng.random_range(1..=64), rng.random_range(1..=96));
        let full = m.min(k);
        let rank = if rng.random_bool(0.5) { full } else { rng.random_range(1..=full) };
        let a = gaussian_matrix(&mut rng, m, rank).matmul(&gaussian_matrix(&mut rng, rank, k));
        let pf = polar(&a);
        let o = orthogonalize_svd(&a);
        r.compare(i, None, "rank", pf.rank as f64, rank as f64, 0.0);
        r.compare(i, None, "rank", rank as f64, pf.rank as f64, 0.0);
        let sv = singular_values(&o);
        let worst = sv
            .iter()
            .enumerate()
            .map(|(j, s)| if j < pf.rank { (s - 1.0).abs() } else { s.abs() })
            .fold(0.0, f64::max);
        r.residual(i, None, "singular-values", worst);
        r.residual(i, None, "op-norm", (operator_norm(&o) - 1.0).abs());
        r.residual(i, None, "nuclear-norm", (nuclear_norm(&o) - pf.rank as f64).abs() / pf.rank as f64);
    }
    finish(r)
}

/// Newton–Schulz (5 steps) against the SVD polar factor on random full-rank
/// matrices with condition number at most 100.
pub fn newton_schulz(n: usize, seed: u64) -> CheckReport {
    let tol = 0.05;
    let mut r = CheckReport::new("newton-schulz", tol).param("instances", n).param("steps", 5);
    r.instances = n;
    for i in 0..n {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let (m, k) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let rank = m.min(k);
        let cond: f64 = rng.random_range(1.0..=100.0);
        let scale: f64 = 10f64.powf(rng.random_range(-3.0..3.0));
        let s: Vec<f64> = (0..rank)
            .map(|j| scale * cond.powf(-(j as f64) / (rank as f64 - 1.0)))
            .collect();
        let a = matrix_with_singular_values(&mut rng, m, k, &s);
        match orthogonalize_ns(&a, 5) {
            Ok(ns) => r.residual(i, None, "op-error", operator_norm(&ns.sub(&orthogonalize_svd(&a)))),
            Err(_) => r.residual(i, None, "op-error", f64::NAN),
        }
    }
    finish(r)
}

/// 15×20 quadratic with Q ∈ SPD(0.01, 1) and W* ∼ U(−1, 1).
pub fn random_quadratic(seed: u64) -> Result<Quadratic, HarnessError> {
    let mut rng = rng_from_seed(seed);
    let q = random_spd(&mut rng, 15, 0.01, 1.0);
    let ws = uniform_matrix(&mut rng, 15, 20, -1.0, 1.0);
    Ok(quadratic_new(q, ws, QuadraticScale::Half)?)
}

fn schedule(kind: ScheduleKind) -> Schedule {
    Schedule {
        kind,
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    }
}

fn taylor(n: usize, seed: u64) -> Result<CheckReport, HarnessError> {
    let mut parts = Vec::with_capacity(n);
    for i in 0..n {
        let p = random_quadratic(derive_seed(seed, i as u64))?;
        let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 1000)?;
        parts.push(check_quadratic_taylor_identity(&trace, &p)?);
    }
    Ok(merge("quadratic-taylor-identity", 1e-9, parts).param("steps", 1000))
}

fn descent(n: usize, seed: u64) -> Result<CheckReport, HarnessError> {
    let mut parts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let p = random_quadratic(derive_seed(seed, i as u64))?;
        let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.02), 200)?;
        for which in [DescentBound::ConvexL, DescentBound::ConvexLstar] {
            parts.push(check_descent_inequalities(&trace, &p, which)?);
        }
    }
    Ok(merge("descent", 1e-8, parts))
}

fn adaptive(n: usize, seed: u64) -> Result<CheckReport, HarnessError> {
    let steps = 500;
    let mut parts = Vec::with_capacity(2 * n);
    for i in 0..n {
        let p = random_quadratic(derive_seed(seed, i as u64))?;
        for which in [AdaptiveBound::L, AdaptiveBound::Lstar] {
            let kind = match which {
                AdaptiveBound::L => ScheduleKind::AdaptiveStarL {
                    r: 15,
                    l: p.meta().l.expect("quadratic L"),
                },
                AdaptiveBound::Lstar => ScheduleKind::AdaptiveStarLstar {
                    l_star: p.meta().l_star.expect("quadratic L_*"),
                },
            };
            let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &schedule(kind), steps)?;
            parts.push(check_adaptive_rate_bound(&trace, &p, which)?);
        }
    }
    Ok(merge("adaptive-rate", 0.0, parts).param("steps", steps))
}

/// Constant stepsize prescribed from the initial distance D0 = ‖W*‖_op:
/// ε/(C·D0) with ε = Δ/100 and C = rL or L_*, or √(2Δ/(J_0·T)) for the J bound.
pub fn prescribed_eta(p: &Quadratic, which: ConstantStepBound, steps: usize) -> f64 {
    let (m, n) = p.shape();
    let w0 = Matrix::zeros(m, n);
    let d0 = operator_norm(p.w_star());
    let delta = p.value(&w0);
    let eps = 1e-2 * delta;
    match which {
        ConstantStepBound::ConvexL => eps / (m.min(n) as f64 * p.meta().l.expect("quadratic L") * d0),
        ConstantStepBound::ConvexLstar => eps / (p.meta().l_star.expect("quadratic L_*") * d0),
        ConstantStepBound::ConvexJ => {
            let o = orthogonalize_svd(&p.grad(&w0));
            let j0 = o.dot(&p.hvp(&w0, &o));
            (2.0 * delta / (j0 * steps as f64)).sqrt()
        }
    }
}

fn constant_step(n: usize, seed: u64) -> Result<CheckReport, HarnessError> {
    let steps = 300;
    let mut parts = Vec::with_capacity(3 * n);
    for i in 0..n {
        let p = random_quadratic(derive_seed(seed, i as u64))?;
        for which in [ConstantStepBound::ConvexL, ConstantStepBound::ConvexLstar, ConstantStepBound::ConvexJ] {
            let eta = prescribed_eta(&p, which, steps);
            let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(eta), steps)?;
            parts.push(check_constant_step_linear_bound(&trace, &p, which)?);
        }
    }
    Ok(merge("constant-step", 1e-8, parts).param("steps", steps))
}

fn nonconvex(runs: usize, seed: u64) -> Result<CheckReport, HarnessError> {
    let q = make_ill_conditioned_q(6, 100.0, SpectrumProfile::Geometric, derive_seed(seed, 1))?.q;
    let ws = uniform_matrix(&mut rng_from_seed(derive_seed(seed, 2)), 6, 8, -1.0, 1.0);
    let p = quadratic_new(q, ws, QuadraticScale::Half)?;
    let cfg = NonconvexRun {
        eta: 0.01,
        beta: 0.9,
        sigma: 0.5,
        batch: 4,
        steps: 100,
        runs,
        seed,
    };
    let mut parts = Vec::new();
    for which in [NonconvexBound::L, NonconvexBound::Lstar] {
        parts.push(check_nonconvex_stochastic_bound(&p, &Matrix::zeros(6, 8), which, &cfg)?);
    }
    Ok(merge("nonconvex-stochastic", 0.0, parts))
}
