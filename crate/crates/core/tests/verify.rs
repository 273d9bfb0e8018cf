use muonlab_core::matcore::random::{gaussian_matrix, random_spd, rng_from_seed, uniform_matrix};
use muonlab_core::matcore::{lambda_norm, nuclear_norm, operator_norm, Matrix};
use muonlab_core::optim::{BetaRule, Schedule, ScheduleKind};
use muonlab_core::problems::{
    gaussian_features, linear_mse_new, make_ill_conditioned_q, mlp_new, onehot_labels, quadratic_new, MlpLoss,
    Quadratic, QuadraticScale, SpectrumProfile,
};
use muonlab_core::verify::*;
use muonlab_core::Problem;

fn sched(kind: ScheduleKind) -> Schedule {
    Schedule {
        kind,
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    }
}

fn quad_15x20(seed: u64) -> Quadratic {
    let mut rng = rng_from_seed(seed);
    let q = random_spd(&mut rng, 15, 0.01, 1.0);
    let ws = uniform_matrix(&mut rng, 15, 20, -1.0, 1.0);
    quadratic_new(q, ws, QuadraticScale::Half).unwrap()
}

#[test]
fn taylor_identity_long_run() {
    let p = quad_15x20(1);
    let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 100).unwrap();
    let report = check_quadratic_taylor_identity(&trace, &p).unwrap();
    assert!(report.pass, "{}", report.to_json());
    assert!(report.max_residual.unwrap() < 1e-9);
    assert_eq!(report.comparisons, 100);
}

#[test]
fn taylor_identity_small_cases() {
    let p = quad_15x20(2);
    let frozen = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.0), 5).unwrap();
    assert!(frozen.values.windows(2).all(|v| v[0] == v[1]));
    assert!(check_quadratic_taylor_identity(&frozen, &p).unwrap().pass);

    let d = quadratic_new(Matrix::from_diag(&[2.0, 1.0]), Matrix::zeros(2, 2), QuadraticScale::Half).unwrap();
    let eta = 0.1;
    let trace = simplified_muon_trace(&d, Matrix::identity(2), &Schedule::constant(eta), 1).unwrap();
    let drop = trace.values[0] - trace.values[1];
    assert!((drop - (eta * 3.0 - eta * eta * 3.0 / 2.0)).abs() < 1e-15);
    assert!(check_quadratic_taylor_identity(&trace, &d).unwrap().pass);
}

#[test]
fn taylor_identity_sensitivity_and_refusal() {
    let p = quad_15x20(3);
    let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 20).unwrap();
    let mut bad = trace.clone();
    bad.values[10] *= 1.01;
    assert!(!check_quadratic_taylor_identity(&bad, &p).unwrap().pass);
    let mut bad = trace.clone();
    bad.etas[4] *= 10.0;
    assert!(!check_quadratic_taylor_identity(&bad, &p).unwrap().pass);

    let mlp = mlp_new(
        vec![(4, 3), (2, 4)],
        gaussian_features(3, 10, 1),
        onehot_labels(2, 10, 2),
        MlpLoss::Mse,
        3,
    )
    .unwrap();
    let t = simplified_muon_trace(&mlp, mlp.current().clone(), &Schedule::constant(0.01), 2).unwrap();
    assert!(matches!(check_quadratic_taylor_identity(&t, &mlp), Err(VerifyError::Refused(_))));
}

#[test]
fn taylor_residual_does_not_grow_with_steps() {
    let p = quad_15x20(4);
    let short = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.005), 50).unwrap();
    let long = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.005), 1000).unwrap();
    let rs = check_quadratic_taylor_identity(&short, &p).unwrap().max_residual.unwrap();
    let rl = check_quadratic_taylor_identity(&long, &p).unwrap().max_residual.unwrap();
    assert!(rl < 1e-12, "{rl}");
    assert!(rs < 1e-12, "{rs}");
}

#[test]
fn descent_inequalities_hold_and_detect_inflation() {
    let p = quad_15x20(5);
    let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.02), 200).unwrap();
    for which in [DescentBound::ConvexL, DescentBound::ConvexLstar] {
        let r = check_descent_inequalities(&trace, &p, which).unwrap();
        assert!(r.pass, "{}", r.to_json());
        let mut bad = trace.clone();
        bad.etas.iter_mut().for_each(|e| *e *= 10.0);
        assert!(!check_descent_inequalities(&bad, &p, which).unwrap().pass);
    }

    let x = gaussian_features(8, 30, 6);
    let mse = linear_mse_new(x, onehot_labels(4, 30, 7)).unwrap();
    let trace = simplified_muon_trace(&mse, Matrix::zeros(4, 8), &Schedule::constant(0.01), 200).unwrap();
    let r = check_descent_inequalities(&trace, &mse, DescentBound::ConvexLstar).unwrap();
    assert!(r.pass, "{}", r.to_json());
    let mut bad = trace.clone();
    for v in bad.values.iter_mut().skip(1) {
        *v *= 1.01;
    }
    assert!(!check_descent_inequalities(&bad, &mse, DescentBound::ConvexLstar).unwrap().pass);
}

#[test]
fn descent_requires_constants() {
    let mlp = mlp_new(
        vec![(4, 3), (2, 4)],
        gaussian_features(3, 10, 1),
        onehot_labels(2, 10, 2),
        MlpLoss::Mse,
        3,
    )
    .unwrap();
    let t = simplified_muon_trace(&mlp, mlp.current().clone(), &Schedule::constant(0.01), 2).unwrap();
    assert!(matches!(
        check_descent_inequalities(&t, &mlp, DescentBound::ConvexL),
        Err(VerifyError::MissingConstant(_))
    ));
}

fn adaptive_trace(p: &Quadratic, which: AdaptiveBound, steps: usize) -> Trace {
    let (m, n) = p.shape();
    let kind = match which {
        AdaptiveBound::L => ScheduleKind::AdaptiveStarL {
            r: m.min(n),
            l: p.meta().l.unwrap(),
        },
        AdaptiveBound::Lstar => ScheduleKind::AdaptiveStarLstar {
            l_star: p.meta().l_star.unwrap(),
        },
    };
    simplified_muon_trace(p, Matrix::zeros(m, n), &sched(kind), steps).unwrap()
}

#[test]
fn adaptive_rate_bounds_on_random_quadratics() {
    for seed in 0..20 {
        let p = quad_15x20(100 + seed);
        for which in [AdaptiveBound::L, AdaptiveBound::Lstar] {
            let trace = adaptive_trace(&p, which, 500);
            let r = check_adaptive_rate_bound(&trace, &p, which).unwrap();
            assert!(r.pass, "seed {seed} {which:?}: {}", r.to_json());
            assert_eq!(r.comparisons, 501);
            // t = 0 holds with equality: bound(0) = Δ.
            assert!(r.worst_margin.abs() <= 1e-12 * trace.values[0], "{}", r.worst_margin);
        }
    }
}

#[test]
fn adaptive_rate_edge_cases_and_sensitivity() {
    let p = quad_15x20(7);
    let ws = p.w_star().clone();
    let kind = ScheduleKind::AdaptiveStarLstar {
        l_star: p.meta().l_star.unwrap(),
    };
    let at_opt = simplified_muon_trace(&p, ws.clone(), &sched(kind), 10).unwrap();
    assert!(at_opt.values.iter().all(|&v| v == 0.0));
    assert!(at_opt.iterates.iter().all(|w| *w == ws));
    assert!(check_adaptive_rate_bound(&at_opt, &p, AdaptiveBound::Lstar).unwrap().pass);

    let trace = adaptive_trace(&p, AdaptiveBound::Lstar, 100);
    let c = p.meta().l_star.unwrap();
    let d_op = trace
        .iterates
        .iter()
        .map(|w| operator_norm(&w.sub(&ws)))
        .fold(0.0, f64::max);
    let delta = trace.values[0];
    let t = 100.0;
    let bound = 2.0 * c * delta * d_op * d_op / (2.0 * c * d_op * d_op + t * delta);
    let mut bad = trace.clone();
    bad.values[100] = 1.01 * bound;
    assert!(!check_adaptive_rate_bound(&bad, &p, AdaptiveBound::Lstar).unwrap().pass);

    let constant = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 3).unwrap();
    assert!(matches!(
        check_adaptive_rate_bound(&constant, &p, AdaptiveBound::L),
        Err(VerifyError::Refused(_))
    ));
}

/// η prescribed from an initial-distance estimate: ε/(C·D) with C = rL or L_*,
/// and √(2Δ/(J·T)) for the J bound.
fn prescribed_eta(p: &Quadratic, which: ConstantStepBound, steps: usize) -> f64 {
    let d0 = operator_norm(p.w_star());
    let delta = p.value(&Matrix::zeros(15, 20));
    let eps = 1e-2 * delta;
    match which {
        ConstantStepBound::ConvexL => eps / (15.0 * p.meta().l.unwrap() * d0),
        ConstantStepBound::ConvexLstar => eps / (p.meta().l_star.unwrap() * d0),
        ConstantStepBound::ConvexJ => {
            let o = muonlab_core::matcore::orthogonalize_svd(&p.grad(&Matrix::zeros(15, 20)));
            let j0 = o.dot(&p.hvp(&Matrix::zeros(15, 20), &o));
            (2.0 * delta / (j0 * steps as f64)).sqrt()
        }
    }
}

#[test]
fn constant_step_bounds_on_random_quadratics() {
    let steps = 300;
    for seed in 0..20 {
        let p = quad_15x20(200 + seed);
        for which in [ConstantStepBound::ConvexL, ConstantStepBound::ConvexLstar, ConstantStepBound::ConvexJ] {
            let eta = prescribed_eta(&p, which, steps);
            let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(eta), steps).unwrap();
            let r = check_constant_step_linear_bound(&trace, &p, which).unwrap();
            assert!(r.pass, "seed {seed} {which:?}: {}", r.to_json());
            assert!(r.notes.is_empty(), "{:?}", r.notes);
            let fb = constant_step_bound(&trace, &p, which).unwrap();
            assert!(fb.gap <= fb.bound);
            if which == ConstantStepBound::ConvexJ {
                assert!(fb.j_tilde.is_some());
            }
        }
    }
}

#[test]
fn constant_step_edge_cases_and_sensitivity() {
    let p = quad_15x20(9);
    let zero = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 0).unwrap();
    for which in [ConstantStepBound::ConvexL, ConstantStepBound::ConvexLstar, ConstantStepBound::ConvexJ] {
        let fb = constant_step_bound(&zero, &p, which).unwrap();
        assert_eq!(fb.gap, fb.bound);
        assert!(check_constant_step_linear_bound(&zero, &p, which).unwrap().pass);
    }

    let eta = prescribed_eta(&p, ConstantStepBound::ConvexJ, 100);
    let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(eta), 100).unwrap();
    let fb = constant_step_bound(&trace, &p, ConstantStepBound::ConvexJ).unwrap();
    let mut bad = trace.clone();
    bad.values[100] = 1.01 * fb.bound;
    assert!(!check_constant_step_linear_bound(&bad, &p, ConstantStepBound::ConvexJ).unwrap().pass);

    let huge = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(1e3), 2).unwrap();
    let r = check_constant_step_linear_bound(&huge, &p, ConstantStepBound::ConvexLstar).unwrap();
    assert!(r.pass && !r.notes.is_empty());

    let mut varying = trace.clone();
    varying.etas[3] *= 2.0;
    assert!(constant_step_bound(&varying, &p, ConstantStepBound::ConvexL).is_err());
}

#[test]
fn norm_lemmas_thousand_instances() {
    let r = check_norm_lemmas(1000, 20, 7).unwrap();
    assert!(r.pass, "{}", r.to_json());
    assert_eq!(r.instances, 1000);
    assert_eq!(r.comparisons, 8000);
    assert!(check_norm_lemmas(10, 21, 0).is_err());
    assert_eq!(check_norm_lemmas(50, 6, 3).unwrap(), check_norm_lemmas(50, 6, 3).unwrap());
}

#[test]
fn lambda_norm_reductions() {
    let mut rng = rng_from_seed(11);
    let a = Matrix::zeros(3, 4);
    let lam = random_spd(&mut rng, 4, 0.1, 10.0);
    assert_eq!(lambda_norm(&a, &lam).unwrap(), 0.0);
    assert_eq!(nuclear_norm(&a), 0.0);
    // Λ = I: ‖A‖_Λ = ‖A‖_F ≤ √n·‖A‖_op.
    for _ in 0..50 {
        let a = gaussian_matrix(&mut rng, 5, 4);
        let lf = lambda_norm(&a, &Matrix::identity(4)).unwrap();
        assert!((lf - muonlab_core::matcore::frobenius_norm(&a)).abs() < 1e-12);
        assert!(lf <= 2.0 * operator_norm(&a) * (1.0 + 1e-12));
    }
}

#[test]
fn momentum_error_lemma_examples() {
    let r = check_momentum_error_lemma(1.0, 1, 0.9, 50, 200, 3).unwrap();
    assert!(r.pass, "{}", r.to_json());
    assert_eq!(r.comparisons, 51);

    let zero = check_momentum_error_lemma(0.0, 4, 0.9, 20, 50, 3).unwrap();
    assert!(zero.pass);
    assert!(zero.worst_margin <= 0.0);

    let nomom = check_momentum_error_lemma(2.0, 4, 0.0, 10, 100, 5).unwrap();
    assert!(nomom.pass);
    assert!((momentum_error_bound(2.0, 4, 0.0, 3) - 1.0).abs() < 1e-15);

    assert!(matches!(check_momentum_error_lemma(1.0, 1, 0.9, 5, 49, 0), Err(VerifyError::Refused(_))));
}

#[test]
fn nonconvex_bound_rhs_matches_formula() {
    // Hand evaluation with T = 10, η = 0.1, β = 0.5, σ = 2, B = 4, r = 4, L = 3.
    let got = nonconvex_bound_rhs(NonconvexBound::L, 1.0, 10, 0.1, 0.5, 2.0, 4, 4, 3.0);
    let want = 1.0 / (10.0 * 0.1)
        + 3.0 * 4.0 * 0.1 / 2.0
        + 2.0 * 2.0 * (4.0f64 * 0.5).sqrt() / (4.0f64 * 1.5).sqrt()
        + 2.0 * 0.5 * 2.0 * 2.0 / (0.5 * 10.0 * 2.0)
        + 2.0 * 4.0 * 0.1 * 0.5 * 3.0 / 0.5;
    assert!((got - want).abs() < 1e-12);
    let got = nonconvex_bound_rhs(NonconvexBound::Lstar, 1.0, 10, 0.1, 0.5, 0.0, 4, 4, 3.0);
    let want = 1.0 + 3.0 * 0.1 / 2.0 + 2.0 * 0.1 * 0.5 * 3.0 / 0.5;
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn nonconvex_stochastic_bound_on_quadratic() {
    let q = make_ill_conditioned_q(6, 100.0, SpectrumProfile::Geometric, 1).unwrap().q;
    let ws = uniform_matrix(&mut rng_from_seed(2), 6, 8, -1.0, 1.0);
    let p = quadratic_new(q, ws, QuadraticScale::Half).unwrap();
    let cfg = NonconvexRun {
        eta: 0.01,
        beta: 0.9,
        sigma: 0.5,
        batch: 4,
        steps: 100,
        runs: 20,
        seed: 4,
    };
    for which in [NonconvexBound::L, NonconvexBound::Lstar] {
        let r = check_nonconvex_stochastic_bound(&p, &Matrix::zeros(6, 8), which, &cfg).unwrap();
        assert!(r.pass, "{}", r.to_json());
    }
    let few = NonconvexRun { runs: 19, ..cfg };
    assert!(check_nonconvex_stochastic_bound(&p, &Matrix::zeros(6, 8), NonconvexBound::L, &few).is_err());
}

#[test]
fn report_json_round_trip() {
    let p = quad_15x20(12);
    let trace = simplified_muon_trace(&p, Matrix::zeros(15, 20), &Schedule::constant(0.01), 10).unwrap();
    let mut bad = trace.clone();
    bad.values[5] *= 1.5;
    for r in [
        check_quadratic_taylor_identity(&trace, &p).unwrap(),
        check_quadratic_taylor_identity(&bad, &p).unwrap(),
        check_norm_lemmas(20, 5, 1).unwrap(),
    ] {
        let back = CheckReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.pass, r.violations.is_empty());
    }
}

#[test]
fn kronecker_j_oracles_agree() {
    let r = check_kronecker_j_oracles(100, 6, 5).unwrap();
    assert!(r.pass, "{}", r.to_json());
    assert_eq!(r.comparisons, 400);
    assert!(r.max_residual.unwrap() < 1e-9);
    assert!(check_kronecker_j_oracles(5, 9, 0).is_err());
}
