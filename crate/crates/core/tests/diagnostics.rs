use muonlab_core::diagnostics::*;
use muonlab_core::matcore::random::{gaussian_matrix, random_orthonormal_columns, random_spd, rng_from_seed};
use muonlab_core::matcore::{
    frobenius_norm, kron, matvec, nuclear_norm, operator_norm, orthogonalize_svd, random::random_orthogonal,
    singular_values, vec_row, Matrix, PowerIteration,
};
use muonlab_core::optim::simplified_muon_step;
use muonlab_core::problems::{
    gaussian_features, linear_mse_new, onehot_labels, quadratic_new, KroneckerQuadratic, QuadraticScale,
};
use muonlab_core::Problem;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn tight(seed: u64) -> PowerIteration {
    PowerIteration {
        tol: 1e-12,
        max_iter: 20_000,
        seed,
    }
}

fn diag21() -> muonlab_core::problems::Quadratic {
    quadratic_new(Matrix::from_diag(&[2.0, 1.0]), Matrix::zeros(2, 2), QuadraticScale::Half).unwrap()
}

/// Row-major Hessian of a KroneckerQuadratic, built independently.
fn brute_quadform(p: &Matrix, q: &Matrix, o: &Matrix) -> f64 {
    let h = kron(p, q).unwrap();
    let v = vec_row(o);
    v.iter().zip(matvec(&h, &v)).map(|(a, b)| a * b).sum()
}

#[test]
fn j_t_examples() {
    let p = diag21();
    let w = Matrix::identity(2);
    let j = j_t(&p, &w, &Matrix::identity(2));
    assert_eq!(j, Quadform { value: 3.0, degenerate: false });

    let iso = quadratic_new(Matrix::identity(3).scale(0.5), Matrix::zeros(3, 5), QuadraticScale::One).unwrap();
    let mut rng = rng_from_seed(1);
    for r in 1..=3 {
        let u = random_orthonormal_columns(&mut rng, 3, r);
        let v = random_orthonormal_columns(&mut rng, 5, r);
        let o = u.matmul_t(&v);
        let j = j_t(&iso, &Matrix::zeros(3, 5), &o).value;
        assert!((j - r as f64).abs() < 1e-12);
    }

    let z = j_t(&p, &w, &Matrix::zeros(2, 2));
    assert!(z.degenerate && z.value == 0.0);
}

#[test]
fn j_t_matches_kron_oracle_and_congruence() {
    let mut rng = rng_from_seed(2);
    for _ in 0..10 {
        let pm = random_spd(&mut rng, 3, 0.1, 5.0);
        let qm = random_spd(&mut rng, 4, 0.1, 5.0);
        let prob = KroneckerQuadratic::new(pm.clone(), qm.clone()).unwrap();
        let w = gaussian_matrix(&mut rng, 3, 4);
        let u = random_orthonormal_columns(&mut rng, 3, 2);
        let v = random_orthonormal_columns(&mut rng, 4, 2);
        let o = u.matmul_t(&v);
        let j = j_t(&prob, &w, &o).value;
        assert!((j - brute_quadform(&pm, &qm, &o)).abs() < 1e-9);
        let cong = u.t_matmul(&pm).matmul(&u).dot(&v.t_matmul(&qm).matmul(&v));
        assert!((j - cong).abs() < 1e-9);
    }
}

#[test]
fn j_t_is_sum_of_designated_entries() {
    let mut rng = rng_from_seed(3);
    for r in 1..=3 {
        let pm = random_spd(&mut rng, 3, 0.2, 3.0);
        let qm = random_spd(&mut rng, 4, 0.2, 3.0);
        let h = kron(&pm, &qm).unwrap();
        let u = random_orthonormal_columns(&mut rng, 3, r);
        let v = random_orthonormal_columns(&mut rng, 4, r);
        let uv = kron(&u, &v).unwrap();
        let a = uv.t_matmul(&h).matmul(&uv);
        let mut sum = 0.0;
        for i in 0..r {
            for k in 0..r {
                sum += a[(i * r + i, k * r + k)];
            }
        }
        let o = u.matmul_t(&v);
        let prob = KroneckerQuadratic::new(pm, qm).unwrap();
        assert!((j_t(&prob, &Matrix::zeros(3, 4), &o).value - sum).abs() < 1e-10);
    }
}

#[test]
fn l_t_examples() {
    let p = diag21();
    let est = l_t(&p, &Matrix::identity(2), &tight(1));
    assert!(est.converged);
    assert!(rel(est.value, 2.0) < 1e-8);
    let dflt = l_t(&p, &Matrix::identity(2), &l_t_defaults(1));
    assert!(rel(dflt.value, 2.0) < 1e-5);

    let x = gaussian_features(6, 15, 4);
    let mse = linear_mse_new(x.clone(), onehot_labels(3, 15, 5)).unwrap();
    let want = singular_values(&x)[0].powi(2) / 15.0;
    let est = l_t(&mse, &Matrix::zeros(3, 6), &tight(2));
    assert!(rel(est.value, want) < 1e-8);

    let mut rng = rng_from_seed(6);
    let pm = random_spd(&mut rng, 3, 0.1, 2.0);
    let qm = random_spd(&mut rng, 4, 0.1, 3.0);
    let want = operator_norm(&pm) * operator_norm(&qm);
    let prob = KroneckerQuadratic::new(pm, qm).unwrap();
    let est = l_t(&prob, &Matrix::zeros(3, 4), &tight(3));
    assert!(rel(est.value, want) < 1e-8);

    let capped = l_t(&prob, &Matrix::zeros(3, 4), &PowerIteration { tol: 1e-16, max_iter: 3, seed: 0 });
    assert!(!capped.converged);
    assert!(capped.value > 0.0 && capped.value <= want * (1.0 + 1e-12));
}

#[test]
fn l_t_is_constant_on_quadratics() {
    let mut rng = rng_from_seed(7);
    let q = random_spd(&mut rng, 5, 0.01, 4.0);
    let p = quadratic_new(q, gaussian_matrix(&mut rng, 5, 3), QuadraticScale::Half).unwrap();
    let cfg = l_t_defaults(9);
    let base = l_t(&p, &Matrix::zeros(5, 3), &cfg).value;
    for _ in 0..10 {
        let w = gaussian_matrix(&mut rng, 5, 3);
        assert!(rel(l_t(&p, &w, &cfg).value, base) < 1e-6);
    }
}

#[test]
fn hat_j_t_examples() {
    // Quadratic with β = 0: ∇f(W_t) − ∇f(W_{t+1}) = η·Q·O_t, so Ĵ_t = ‖Q·O_t‖_*.
    let q = Matrix::from_diag(&[3.0, 1.0, 0.5]);
    let p = quadratic_new(q.clone(), Matrix::zeros(3, 3), QuadraticScale::Half).unwrap();
    let mut rng = rng_from_seed(8);
    let w = gaussian_matrix(&mut rng, 3, 3);
    let g0 = p.grad(&w);
    let o = orthogonalize_svd(&g0);
    let eta = 0.05;
    let w1 = simplified_muon_step(&w, &g0, eta).unwrap();
    let h = hat_j_t(&p, &w, &o, &g0, &p.grad(&w1));
    assert!(!h.degenerate);
    assert!(rel(h.value, nuclear_norm(&q.matmul(&o))) < 1e-10);

    // Aligned directions: O_t = I gives Q·O_t PD, so O_g = I and Ĵ_t = J_t.
    let i3 = Matrix::identity(3);
    let h = hat_j_t(&p, &w, &i3, &p.grad(&w), &p.grad(&w.sub(&i3.scale(eta))));
    assert!(rel(h.value, j_t(&p, &w, &i3).value) < 1e-12);

    // Doubling the Hessian doubles Ĵ_t for the same direction pair.
    let p2 = quadratic_new(q.scale(2.0), Matrix::zeros(3, 3), QuadraticScale::Half).unwrap();
    let gp = p.grad(&w);
    let gn = p.grad(&w1);
    let h1 = hat_j_t(&p, &w, &o, &gp, &gn).value;
    let h2 = hat_j_t(&p2, &w, &o, &gp, &gn).value;
    assert!(rel(h2, 2.0 * h1) < 1e-12);

    let z = hat_j_t(&p, &w, &o, &gp, &gp);
    assert!(z.degenerate && z.value == 0.0);
}

#[test]
fn ratio_condition_examples() {
    let eq = ratio_condition(2.0, 2.0, 1.5, 1.5).unwrap();
    assert!(eq.holds);
    assert_eq!((eq.lhs, eq.rhs), (1.0, 1.0));
    for r in 1..6 {
        let g = Matrix::identity(r);
        let c = ratio_condition(1.0, 2.0, frobenius_norm(&g), nuclear_norm(&g)).unwrap();
        assert!(c.holds);
        assert!(rel(c.rhs, r as f64) < 1e-12);
    }
    assert!(!ratio_condition(3.0, 1.0, 1.0, 1.0).unwrap().holds);
    assert!(ratio_condition(1.0, 0.0, 1.0, 1.0).is_err());
    assert!(ratio_condition(1.0, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn ratio_condition_replays_from_log() {
    let mut rng = rng_from_seed(10);
    let q = random_spd(&mut rng, 4, 0.05, 2.0);
    let p = quadratic_new(q, gaussian_matrix(&mut rng, 4, 6), QuadraticScale::Half).unwrap();
    let mut w = Matrix::zeros(4, 6);
    let mut log = Vec::new();
    for t in 0..30 {
        let g = p.grad(&w);
        let o = orthogonalize_svd(&g);
        let j = j_t(&p, &w, &o).value;
        let l = l_t(&p, &w, &l_t_defaults(t)).value;
        let (gf, gn) = (frobenius_norm(&g), nuclear_norm(&g));
        let rc = ratio_condition(j, l, gf, gn).unwrap();
        log.push((j, l, gf, gn, rc.holds));
        // Rayleigh bound with ‖O‖_F² = rank.
        assert!(j.abs() <= l * 4.0 * (1.0 + 1e-6));
        w = simplified_muon_step(&w, &g, 0.02).unwrap();
    }
    for (j, l, gf, gn, holds) in log {
        assert_eq!(holds, j / l <= (gn * gn) / (gf * gf) * (1.0 + 1e-12));
    }
}

/// Weighted mean with explicit powers and compensated (Neumaier) summation.
fn j_tilde_oracle(js: &[f64], eta: f64, d_op: f64) -> f64 {
    let t = js.len();
    let base = 1.0 - eta / d_op;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (i, &j) in js.iter().enumerate() {
        let term = base.powi((t - 1 - i) as i32) * j;
        let s = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - s) + term } else { (term - s) + sum };
        sum = s;
    }
    (sum + comp) / t as f64
}

#[test]
fn averaged_j_examples() {
    let t = 25;
    let js = vec![3.0; t];
    assert_eq!(average_j(&js).unwrap(), 3.0);
    let (eta, d) = (0.1f64, 2.0f64);
    let geo: f64 = (0..t).map(|k| (1.0 - eta / d).powi(k as i32)).sum();
    assert!(rel(weighted_j_tilde(&js, eta, d).unwrap(), 3.0 * geo / t as f64) < 1e-13);

    let mut rng = rng_from_seed(11);
    let js: Vec<f64> = gaussian_matrix(&mut rng, 1, 40).into_vec();
    assert!(rel(weighted_j_tilde(&js, 1.0, 1.0).unwrap(), js[39] / 40.0) < 1e-15);

    for k in 0..20 {
        let js: Vec<f64> = gaussian_matrix(&mut rng, 1, 50 + k).into_vec().iter().map(|v| v * 10.0).collect();
        let eta = 0.01 * (k + 1) as f64;
        let got = weighted_j_tilde(&js, eta, 0.5).unwrap();
        let want = j_tilde_oracle(&js, eta, 0.5);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        let mean_abs = js.iter().map(|v| v.abs()).sum::<f64>() / js.len() as f64;
        assert!(got <= mean_abs + 1e-9);
    }

    assert_eq!(average_j(&[]), Err(DiagError::Empty));
    assert_eq!(weighted_j_tilde(&[], 0.1, 1.0), Err(DiagError::Empty));
    assert!(weighted_j_tilde(&[1.0], 2.0, 1.0).is_err());
    assert!(weighted_j_tilde(&[1.0], 0.0, 1.0).is_err());
}

#[test]
fn vonneumann_examples() {
    assert_eq!(vonneumann_bound(&[2.0, 1.0], &[3.0, 1.0], 2).unwrap(), 7.0);
    assert_eq!(vonneumann_bound(&[1.0; 5], &[1.0; 6], 5).unwrap(), 5.0);
    assert!(vonneumann_bound(&[1.0], &[1.0, 1.0], 2).is_err());
    assert!(vonneumann_bound(&[1.0, 2.0], &[1.0, 1.0], 1).is_err());
}

#[test]
fn vonneumann_bounds_kronecker_quadform() {
    let mut rng = rng_from_seed(12);
    for i in 0..100 {
        let (m, n) = (2 + i % 3, 3 + i % 2);
        let pm = random_spd(&mut rng, m, 0.05, 4.0);
        let qm = random_spd(&mut rng, n, 0.05, 4.0);
        let r = 1 + i % m.min(n);
        let u = random_orthonormal_columns(&mut rng, m, r);
        let v = random_orthonormal_columns(&mut rng, n, r);
        let o = u.matmul_t(&v);
        let j = brute_quadform(&pm, &qm, &o);
        let bound = vonneumann_bound(&singular_values(&pm), &singular_values(&qm), r).unwrap();
        assert!(j <= bound * (1.0 + 1e-10), "instance {i}: {j} > {bound}");
    }
}

#[test]
fn distance_examples() {
    let mut rng = rng_from_seed(13);
    let w = gaussian_matrix(&mut rng, 3, 4);
    assert_eq!(distance_metrics(&w, &w), Distances { fro: 0.0, op: 0.0 });
    for r in 1..6 {
        let ws = random_orthogonal(&mut rng, r);
        let w0 = ws.add(&Matrix::identity(r));
        let d = distance_metrics(&w0, &ws);
        assert!(rel(d.fro * d.fro, r as f64) < 1e-12);
        assert!(rel(d.op, 1.0) < 1e-12);
        assert!(rel(comparison_ratio(d.fro, d.op, 2.5, 2.5), r as f64) < 1e-12);
    }
}

#[test]
fn concentration_examples() {
    let mut rng = rng_from_seed(14);
    let u = gaussian_matrix(&mut rng, 6, 1);
    let v = gaussian_matrix(&mut rng, 1, 9);
    assert!(rel(concentration_ratio(&u.matmul(&v)).unwrap(), 1.0) < 1e-8);
    for k in [2, 5, 10] {
        let q = random_orthogonal(&mut rng, k);
        assert!(rel(concentration_ratio(&q).unwrap(), k as f64) < 1e-8);
    }
    let x = gaussian_features(784, 1000, 15);
    let ratio = concentration_ratio(&x).unwrap();
    assert!((200.0..=245.0).contains(&ratio), "{ratio}");
    assert!(concentration_ratio(&Matrix::zeros(2, 2)).is_err());
    let s = spectrum(&x);
    assert!(s.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn record_flags_round_trip() {
    let all = [false, true];
    for a in all {
        for b in all {
            for c in all {
                for d in all {
                    let f = RecordFlags {
                        fd_kink: a,
                        power_nonconverged: b,
                        degenerate_direction: c,
                        diverged: d,
                    };
                    assert_eq!(RecordFlags::decode(&f.encode()).unwrap(), f);
                }
            }
        }
    }
    assert_eq!(RecordFlags::default().encode(), "");
    assert!(RecordFlags::decode("bogus").is_err());
}

#[test]
fn summary_aggregates() {
    let js = [3.0, 2.0, 1.0];
    let mut records: Vec<StepRecord> = (0..4)
        .map(|t| StepRecord {
            t,
            f: 10.0 - t as f64,
            grad_fro: 1.0,
            grad_nuc: 1.5,
            eta: (t < 3).then_some(0.1),
            j_t: js.get(t).copied(),
            dist_fro: Some(4.0 - t as f64),
            dist_op: Some(2.0 - 0.5 * t as f64),
            ratio_lhs: Some(t as f64),
            ratio_rhs: Some(1.5),
            ..StepRecord::default()
        })
        .collect();
    let inputs = SummaryInputs {
        l: Some(2.0),
        l_star: Some(3.0),
        f_star: Some(6.5),
        constant_eta: Some(0.1),
    };
    let s = summarize(&records, &inputs).unwrap();
    assert_eq!(s.steps, 3);
    assert_eq!(s.final_f, 7.0);
    assert_eq!(s.final_gap, Some(0.5));
    assert_eq!(s.j_mean, Some(2.0));
    assert_eq!(s.d_f, Some(4.0));
    assert_eq!(s.d_op, Some(2.0));
    assert!(rel(s.comparison_ratio.unwrap(), 16.0 * 2.0 / (4.0 * 3.0)) < 1e-15);
    assert!(rel(s.j_tilde.unwrap(), j_tilde_oracle(&js, 0.1, 2.0)) < 1e-14);
    assert_eq!(s.ratio_condition_fraction, Some(0.5));
    assert!(!s.diverged);

    records[1].j_t = None;
    assert_eq!(summarize(&records, &inputs).unwrap().j_tilde, None);
    records[3].flags.diverged = true;
    assert!(summarize(&records, &inputs).unwrap().diverged);
    assert_eq!(summarize(&[], &inputs), Err(DiagError::Empty));
}
