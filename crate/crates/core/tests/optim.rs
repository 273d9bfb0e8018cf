use muonlab_core::matcore::random::{gaussian_matrix, rng_from_seed};
use muonlab_core::matcore::{nuclear_norm, operator_norm, orthogonalize_svd, Matrix};
use muonlab_core::optim::*;
use muonlab_core::problems::{quadratic_new, QuadraticScale};
use muonlab_core::Problem;

fn diag_quadratic() -> muonlab_core::problems::Quadratic {
    // W* = 0 and W = I₂ gives W − W* = diag(1, 1).
    quadratic_new(Matrix::from_diag(&[2.0, 1.0]), Matrix::zeros(2, 2), QuadraticScale::One).unwrap()
}

#[test]
fn muon_first_step_uses_raw_gradient() {
    let mut rng = rng_from_seed(1);
    let w = gaussian_matrix(&mut rng, 3, 4);
    let g = gaussian_matrix(&mut rng, 3, 4);
    for beta in [0.0, 0.5, 0.95] {
        let mut st = MuonState::new(beta, Orthogonalizer::Svd).unwrap();
        assert!(st.momentum().is_none());
        let next = muon_step(&mut st, &w, &g, 0.1).unwrap();
        let mut want = w.clone();
        want.axpy(-0.1, &orthogonalize_svd(&g));
        assert_eq!(next, want);
        assert_eq!(st.momentum(), Some(&g));
        assert_eq!(st.t(), 1);
    }
}

#[test]
fn muon_on_diagonal_quadratic_by_hand() {
    // f = tr((W−W*)ᵀQ(W−W*)) with c = 1 has gradient 2Q(W−W*), still a
    // positive diagonal, so the polar factor is I₂.
    let p = diag_quadratic();
    let w = Matrix::identity(2);
    let g = p.grad(&w);
    assert_eq!(g, Matrix::from_diag(&[4.0, 2.0]));
    let half = quadratic_new(Matrix::from_diag(&[2.0, 1.0]), Matrix::zeros(2, 2), QuadraticScale::Half).unwrap();
    assert_eq!(half.grad(&w), Matrix::from_diag(&[2.0, 1.0]));

    let mut st = MuonState::new(0.0, Orthogonalizer::Svd).unwrap();
    let next = muon_step(&mut st, &w, &half.grad(&w), 0.1).unwrap();
    let want = Matrix::from_diag(&[0.9, 0.9]);
    assert!(next.sub(&want).max_abs() < 1e-15);
    let simple = simplified_muon_step(&w, &half.grad(&w), 0.1).unwrap();
    assert_eq!(simple, next);
}

#[test]
fn beta_zero_matches_simplified_trajectory() {
    let mut rng = rng_from_seed(2);
    let mut st = MuonState::new(0.0, Orthogonalizer::Svd).unwrap();
    let mut w1 = gaussian_matrix(&mut rng, 4, 5);
    let mut w2 = w1.clone();
    for _ in 0..20 {
        let g = gaussian_matrix(&mut rng, 4, 5);
        w1 = muon_step(&mut st, &w1, &g, 0.05).unwrap();
        w2 = simplified_muon_step(&w2, &g, 0.05).unwrap();
        assert_eq!(w1, w2);
    }
}

#[test]
fn momentum_recursion_expansion() {
    let mut rng = rng_from_seed(3);
    let beta = 0.8;
    let mut st = MuonState::new(beta, Orthogonalizer::Svd).unwrap();
    let w = Matrix::zeros(3, 3);
    let gs: Vec<Matrix> = (0..12).map(|_| gaussian_matrix(&mut rng, 3, 3)).collect();
    for g in &gs {
        muon_step(&mut st, &w, g, 0.0).unwrap();
    }
    let t = gs.len() - 1;
    let mut want = gs[0].scale(beta.powi(t as i32));
    for (i, g) in gs.iter().enumerate().skip(1) {
        want.axpy((1.0 - beta) * beta.powi((t - i) as i32), g);
    }
    assert!(st.momentum().unwrap().sub(&want).max_abs() < 1e-10);
}

#[test]
fn zero_momentum_gives_zero_step() {
    let w = Matrix::from_diag(&[1.0, 2.0]);
    let z = Matrix::zeros(2, 2);
    let mut st = MuonState::new(0.9, Orthogonalizer::Svd).unwrap();
    assert_eq!(muon_step(&mut st, &w, &z, 1.0).unwrap(), w);
    let mut ns = MuonState::new(0.9, Orthogonalizer::newton_schulz(5)).unwrap();
    assert_eq!(muon_step(&mut ns, &w, &z, 1.0).unwrap(), w);
    assert_eq!(simplified_muon_step(&w, &z, 1.0).unwrap(), w);
}

#[test]
fn shape_and_hyperparameter_errors() {
    let w = Matrix::zeros(2, 3);
    let g = Matrix::zeros(3, 2);
    let mut st = MuonState::new(0.5, Orthogonalizer::Svd).unwrap();
    assert!(matches!(muon_step(&mut st, &w, &g, 0.1), Err(OptimError::ShapeMismatch { .. })));
    assert!(simplified_muon_step(&w, &g, 0.1).is_err());
    assert!(gd_step(&w, &g, 0.1).is_err());
    assert!(gd_step(&w, &w, -0.1).is_err());
    assert!(MuonState::new(1.0, Orthogonalizer::Svd).is_err());
    let mut adam = AdamState::new(AdamParams::default()).unwrap();
    assert!(adam_step(&mut adam, &w, &g, 0.1).is_err());
    let mut nes = NesterovState::new(0.9).unwrap();
    assert!(gd_nesterov_step(&mut nes, &w, &g, 0.1, 0.9).is_err());
}

#[test]
fn orthogonal_gradient_steps_along_normalized_gradient() {
    let q = muonlab_core::matcore::random::random_orthogonal(&mut rng_from_seed(4), 4);
    let g = q.scale(3.0);
    let w = Matrix::zeros(4, 4);
    let next = simplified_muon_step(&w, &g, 1.0).unwrap();
    let want = g.scale(-1.0 / operator_norm(&g));
    assert!(next.sub(&want).max_abs() < 1e-12);
}

#[test]
fn direction_duality() {
    let mut rng = rng_from_seed(5);
    for _ in 0..20 {
        let m = gaussian_matrix(&mut rng, 5, 7);
        let o = orthogonalize_svd(&m);
        assert!((operator_norm(&o) - 1.0).abs() < 1e-9);
        let nuc = nuclear_norm(&m);
        assert!((m.dot(&o) - nuc).abs() <= 1e-9 * nuc);
    }
}

#[test]
fn gd_examples() {
    let w = Matrix::from_diag(&[1.0, 1.0]);
    assert_eq!(gd_step(&w, &Matrix::from_diag(&[5.0, 5.0]), 0.0).unwrap(), w);

    // Q = diag(2, 1), c = ½: L = 2 and each mode contracts by (1 − λ_i/2).
    let p = quadratic_new(Matrix::from_diag(&[2.0, 1.0]), Matrix::zeros(2, 2), QuadraticScale::Half).unwrap();
    let l = p.meta().l.unwrap();
    assert_eq!(l, 2.0);
    let next = gd_step(&w, &p.grad(&w), 1.0 / l).unwrap();
    assert!(next.sub(&Matrix::from_diag(&[0.0, 0.5])).max_abs() < 1e-15);
}

#[test]
fn gd_inverse_l_is_monotone_on_quadratic() {
    let mut rng = rng_from_seed(6);
    let q = muonlab_core::matcore::random::random_spd(&mut rng, 5, 0.01, 3.0);
    let ws = gaussian_matrix(&mut rng, 5, 6);
    let p = quadratic_new(q, ws, QuadraticScale::Half).unwrap();
    let l = p.meta().l.unwrap();
    let mut w = Matrix::zeros(5, 6);
    let mut f = p.value(&w);
    for _ in 0..200 {
        w = gd_step(&w, &p.grad(&w), 1.0 / l).unwrap();
        let next = p.value(&w);
        assert!(next <= f * (1.0 + 1e-15));
        f = next;
    }
}

#[test]
fn adam_first_step_is_sign_like() {
    let g = Matrix::from_rows(&[&[0.3, -2.0], &[1e-3, 50.0]]);
    let w = Matrix::zeros(2, 2);
    let mut st = AdamState::new(AdamParams::default()).unwrap();
    let eta = 0.01;
    let next = adam_step(&mut st, &w, &g, eta).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let want = -eta * g[(i, j)] / (g[(i, j)].abs() + 1e-8);
            assert!((next[(i, j)] - want).abs() < 1e-12);
            assert!((next[(i, j)].abs() - eta).abs() < 1e-7);
        }
    }
}

#[test]
fn adamw_decays_weights() {
    let w = Matrix::from_diag(&[1.0, 1.0]);
    let g = Matrix::zeros(2, 2);
    let mut st = AdamState::new(AdamParams::default()).unwrap();
    let next = adamw_step(&mut st, &w, &g, 0.1).unwrap();
    assert!((next[(0, 0)] - (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    let mut plain = AdamState::new(AdamParams::default()).unwrap();
    assert_eq!(adam_step(&mut plain, &w, &g, 0.1).unwrap(), w);
}

#[test]
fn nesterov_matches_unrolled_recursion() {
    let mut rng = rng_from_seed(7);
    let mu = DEFAULT_NESTEROV_MU;
    let mut st = NesterovState::new(mu).unwrap();
    let mut w = Matrix::zeros(2, 3);
    let mut v = Matrix::zeros(2, 3);
    let mut w_ref = w.clone();
    for _ in 0..5 {
        let g = gaussian_matrix(&mut rng, 2, 3);
        w = gd_nesterov_step(&mut st, &w, &g, 0.1, mu).unwrap();
        v = v.scale(mu).add(&g);
        w_ref = w_ref.sub(&g.add(&v.scale(mu)).scale(0.1));
        assert!(w.sub(&w_ref).max_abs() < 1e-14);
    }
}

#[test]
fn schedule_examples() {
    let ctx = EtaContext::default();
    assert_eq!(next_eta(&Schedule::constant(0.01), &ctx).unwrap(), 0.01);
    assert_eq!(next_eta(&Schedule::constant(0.01), &EtaContext { t: 999, ..ctx }).unwrap(), 0.01);

    let s = Schedule {
        kind: ScheduleKind::TheoryNonconvexL {
            delta: 1.0,
            r: 4,
            t_total: 100,
            l: 2.0,
            beta: 0.0,
        },
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    };
    assert!((next_eta(&s, &ctx).unwrap() - (1.0f64 / 800.0).sqrt()).abs() < 1e-15);
    assert!((next_eta(&s, &ctx).unwrap() - 0.035355).abs() < 1e-6);

    let adaptive = Schedule {
        kind: ScheduleKind::AdaptiveStarLstar { l_star: 6.0 },
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    };
    let with_grad = EtaContext {
        grad_nuc: Some(3.0),
        ..ctx
    };
    assert_eq!(next_eta(&adaptive, &with_grad).unwrap(), 0.5);
    assert_eq!(
        next_eta(&adaptive, &EtaContext { grad_nuc: Some(0.0), ..ctx }).unwrap(),
        0.0
    );
    assert!(next_eta(&adaptive, &ctx).is_err());

    let al = Schedule {
        kind: ScheduleKind::AdaptiveStarL { r: 3, l: 2.0 },
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    };
    assert_eq!(next_eta(&al, &with_grad).unwrap(), 0.5);

    let lstar = Schedule {
        kind: ScheduleKind::TheoryNonconvexLstar {
            delta: 2.0,
            t_total: 50,
            l_star: 4.0,
            beta: 0.5,
        },
        beta_rule: BetaRule::Fixed { beta: 0.5 },
    };
    assert!((next_eta(&lstar, &ctx).unwrap() - (0.5f64 * 2.0 / 200.0).sqrt()).abs() < 1e-15);

    let tj = Schedule {
        kind: ScheduleKind::TheoryJ {
            delta: 8.0,
            j: 4.0,
            t_total: 100,
        },
        beta_rule: BetaRule::Fixed { beta: 0.0 },
    };
    assert!((next_eta(&tj, &ctx).unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn schedule_errors() {
    let ctx = EtaContext::default();
    let bad = [
        ScheduleKind::TheoryNonconvexL { delta: 0.0, r: 1, t_total: 1, l: 1.0, beta: 0.0 },
        ScheduleKind::TheoryNonconvexL { delta: 1.0, r: 1, t_total: 0, l: 1.0, beta: 0.0 },
        ScheduleKind::TheoryNonconvexL { delta: 1.0, r: 1, t_total: 1, l: -1.0, beta: 0.0 },
        ScheduleKind::TheoryNonconvexLstar { delta: 1.0, t_total: 1, l_star: f64::NAN, beta: 0.0 },
        ScheduleKind::TheoryJ { delta: 1.0, j: 0.0, t_total: 1 },
        ScheduleKind::Constant { eta: -1.0 },
    ];
    for kind in bad {
        let s = Schedule {
            kind,
            beta_rule: BetaRule::Fixed { beta: 0.0 },
        };
        assert!(next_eta(&s, &ctx).is_err(), "{:?}", s.kind);
    }
}

#[test]
fn theory_beta_rule() {
    let rule = |sigma: f64, r: Option<usize>| BetaRule::TheoryBeta {
        smoothness: 4.0,
        delta: 1.0,
        sigma,
        t_total: 100,
        r,
    };
    // 1 − β = √(4·1)/(2·10) = 0.1.
    assert!((next_beta(&rule(2.0, None)).unwrap() - 0.9).abs() < 1e-15);
    // r-scaled: 2 / (2·√400) = 0.05.
    assert!((next_beta(&rule(2.0, Some(4))).unwrap() - 0.95).abs() < 1e-15);
    // Tiny noise saturates at 1 − β = 1.
    assert_eq!(next_beta(&rule(1e-6, None)).unwrap(), 0.0);
    assert_eq!(next_beta(&rule(0.0, None)).unwrap(), DETERMINISTIC_BETA);
    assert!(next_beta(&BetaRule::Fixed { beta: 1.2 }).is_err());
}

#[test]
fn optimizer_enum_dispatch() {
    let mut rng = rng_from_seed(8);
    let w = gaussian_matrix(&mut rng, 3, 4);
    let g = gaussian_matrix(&mut rng, 3, 4);
    let specs = [
        OptimizerSpec::Muon {
            beta: 0.9,
            orthogonalizer: Orthogonalizer::Svd,
        },
        OptimizerSpec::SimplifiedMuon {
            orthogonalizer: Orthogonalizer::newton_schulz(5),
        },
        OptimizerSpec::Gd,
        OptimizerSpec::Nesterov { mu: 0.9 },
        OptimizerSpec::Adam(AdamParams::default()),
        OptimizerSpec::AdamW(AdamParams::default()),
    ];
    for spec in specs {
        let mut opt = spec.build().unwrap();
        let out = opt.step(&w, &g, 0.01).unwrap();
        assert_eq!(out.direction.is_some(), spec.is_muon());
        assert!(out.w.is_finite());
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<OptimizerSpec>(&json).unwrap(), spec);
    }
}
