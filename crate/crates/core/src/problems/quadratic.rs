use serde::{Deserialize, Serialize};

use super::{HvpKind, Problem, ProblemError, ProblemMeta};
use crate::matcore::random::{matrix_with_spectrum, rng_from_seed};
use crate::matcore::{check_spd, singular_values, Matrix};

/// Scale in f(W) = c·tr((W−W*)ᵀQ(W−W*)).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadraticScale {
    /// c = ½.
    #[default]
    Half,
    /// c = 1.
    One,
}

impl QuadraticScale {
    pub fn c(self) -> f64 {
        match self {
            QuadraticScale::Half => 0.5,
            QuadraticScale::One => 1.0,
        }
    }
}

/// f(W) = c·tr((W−W*)ᵀQ(W−W*)) with Q symmetric positive definite.
#[derive(Clone, Debug)]
pub struct Quadratic {
    q: Matrix,
    c: f64,
    meta: ProblemMeta,
}

pub fn quadratic_new(q: Matrix, w_star: Matrix, scale: QuadraticScale) -> Result<Quadratic, ProblemError> {
    if q.rows() != w_star.rows() {
        return Err(ProblemError::Dimension(format!(
            "Q is {:?} but W* has {} rows",
            q.shape(),
            w_star.rows()
        )));
    }
    let eig = check_spd(&q)?;
    let c = scale.c();
    let meta = ProblemMeta {
        l: Some(2.0 * c * eig[0]),
        l_star: Some(2.0 * c * eig.iter().sum::<f64>()),
        w_star: Some(w_star),
        f_star: Some(0.0),
        sigma: None,
    };
    Ok(Quadratic { q, c, meta })
}

impl Quadratic {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn w_star(&self) -> &Matrix {
        self.meta.w_star.as_ref().expect("quadratic always knows W*")
    }

    /// Same Q and scale, different optimum.
    pub fn with_w_star(&self, w_star: Matrix) -> Result<Quadratic, ProblemError> {
        if w_star.shape() != self.w_star().shape() {
            return Err(ProblemError::Dimension("W* shape changed".into()));
        }
        let mut out = self.clone();
        out.meta.w_star = Some(w_star);
        Ok(out)
    }
}

impl Problem for Quadratic {
    fn shape(&self) -> (usize, usize) {
        self.w_star().shape()
    }

    fn value(&self, w: &Matrix) -> f64 {
        let e = w.sub(self.w_star());
        self.c * e.dot(&self.q.matmul(&e))
    }

    fn grad(&self, w: &Matrix) -> Matrix {
        let e = w.sub(self.w_star());
        self.q.matmul(&e).scale(2.0 * self.c)
    }

    fn value_and_grad(&self, w: &Matrix) -> (f64, Matrix) {
        let e = w.sub(self.w_star());
        let qe = self.q.matmul(&e);
        (self.c * e.dot(&qe), qe.scale(2.0 * self.c))
    }

    fn hvp(&self, _w: &Matrix, d: &Matrix) -> Matrix {
        self.q.matmul(d).scale(2.0 * self.c)
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::Exact
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

/// Eigenvalue profile for [`make_ill_conditioned_q`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumProfile {
    /// λ_i = cond^{−(i−1)/(m−1)}.
    Geometric,
    /// λ_1 = 1, all others 1/cond.
    #[default]
    TwoCluster,
}

#[derive(Clone, Debug)]
pub struct IllConditionedQ {
    pub q: Matrix,
    /// Requested eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

impl IllConditionedQ {
    /// ‖Q‖_* / ‖Q‖_op from the requested spectrum.
    pub fn nuclear_over_op(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.eigenvalues[0]
    }
}

/// Q = R·diag(λ)·Rᵀ with Haar-random orthogonal R.
pub fn make_ill_conditioned_q(
    m: usize,
    cond: f64,
    profile: SpectrumProfile,
    seed: u64,
) -> Result<IllConditionedQ, ProblemError> {
    if m < 2 || !(cond > 1.0 && cond.is_finite()) {
        return Err(ProblemError::InvalidArgument(format!("need m >= 2 and cond > 1, got m={m}, cond={cond}")));
    }
    let eigenvalues: Vec<f64> = match profile {
        SpectrumProfile::Geometric => (0..m)
            .map(|i| cond.powf(-(i as f64) / (m as f64 - 1.0)))
            .collect(),
        SpectrumProfile::TwoCluster => (0..m).map(|i| if i == 0 { 1.0 } else { 1.0 / cond }).collect(),
    };
    let mut rng = rng_from_seed(seed);
    let q = matrix_with_spectrum(&mut rng, &eigenvalues);
    Ok(IllConditionedQ { q, eigenvalues })
}

/// f(W) = ½⟨W, P·W·Q⟩ for symmetric P (m×m) and Q (n×n), so that the Hessian
/// under row-major vectorization is exactly P ⊗ Q.
#[derive(Clone, Debug)]
pub struct KroneckerQuadratic {
    p: Matrix,
    q: Matrix,
    meta: ProblemMeta,
}

impl KroneckerQuadratic {
    pub fn new(p: Matrix, q: Matrix) -> Result<Self, ProblemError> {
        for (name, a) in [("P", &p), ("Q", &q)] {
            match a.asymmetry() {
                None => return Err(ProblemError::Dimension(format!("{name} must be square"))),
                Some(asym) if asym > 1e-12 * a.max_abs().max(1.0) => {
                    return Err(ProblemError::InvalidArgument(format!("{name} must be symmetric")))
                }
                _ => {}
            }
        }
        let l = singular_values(&p)[0] * singular_values(&q)[0];
        let meta = ProblemMeta {
            l: Some(l),
            ..ProblemMeta::default()
        };
        Ok(Self { p, q, meta })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }
}

impl Problem for KroneckerQuadratic {
    fn shape(&self) -> (usize, usize) {
        (self.p.rows(), self.q.rows())
    }

    fn value(&self, w: &Matrix) -> f64 {
        0.5 * w.dot(&self.hvp(w, w))
    }

    fn grad(&self, w: &Matrix) -> Matrix {
        self.hvp(w, w)
    }

    fn hvp(&self, _w: &Matrix, d: &Matrix) -> Matrix {
        self.p.matmul(d).matmul(&self.q)
    }

    fn hvp_kind(&self) -> HvpKind {
        HvpKind::Exact
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}
