//! Dense decompositions backed by `nalgebra`.

use nalgebra::DMatrix;

use super::{MatError, Matrix};

/// Thin SVD `A = U · diag(S) · Vᵀ` with `k = min(m, n)` columns.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn k(&self) -> usize {
        self.s.len()
    }

    /// U · diag(S) · Vᵀ.
    pub fn reconstruct(&self) -> Matrix {
        self.u.scale_columns(&self.s).matmul_t(&self.v)
    }

    /// Number of singular values strictly above `rel_tol · max(S)`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

pub(crate) fn to_nalgebra(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_raw(r, c, m.transpose().as_slice().to_vec())
}

/// Thin SVD with singular values sorted nonincreasing and a deterministic
/// sign convention: the first nonzero entry of each column of U is positive.
pub fn svd(a: &Matrix) -> SvdResult {
    let (m, n) = a.shape();
    let k = m.min(n);
    if a.is_zero() {
        return SvdResult {
            u: Matrix::eye(m, k),
            s: vec![0.0; k],
            v: Matrix::eye(n, k),
        };
    }
    let dec = nalgebra::linalg::SVD::new(to_nalgebra(a), true, true);
    let u_na = dec.u.expect("U requested");
    let vt_na = dec.v_t.expect("Vᵀ requested");
    let s_na = dec.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s_na[j].total_cmp(&s_na[i]).then(i.cmp(&j)));

    let mut u = Matrix::zeros(m, k);
    let mut v = Matrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (col, &src) in order.iter().enumerate() {
        s.push(s_na[src].max(0.0));
        let sign = column_sign((0..m).map(|i| u_na[(i, src)]));
        for i in 0..m {
            u[(i, col)] = sign * u_na[(i, src)];
        }
        for j in 0..n {
            v[(j, col)] = sign * vt_na[(src, j)];
        }
    }
    SvdResult { u, s, v }
}

fn column_sign(col: impl Iterator<Item = f64>) -> f64 {
    for x in col {
        if x.abs() > 1e-12 {
            return x.signum();
        }
    }
    1.0
}

/// Singular values only, sorted nonincreasing.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.is_zero() {
        return vec![0.0; a.min_dim()];
    }
    let mut s: Vec<f64> = to_nalgebra(a)
        .singular_values()
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Symmetric eigen-decomposition `A = Q · diag(λ) · Qᵀ`, eigenvalues nonincreasing.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub fn sym_eigen(a: &Matrix) -> Result<SymEigen, MatError> {
    let n = a.rows();
    if n != a.cols() {
        return Err(MatError::NotSquare(a.shape()));
    }
    let dec = nalgebra::linalg::SymmetricEigen::new(to_nalgebra(&a.symmetrize()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dec.eigenvalues[j].total_cmp(&dec.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (col, &src) in order.iter().enumerate() {
        values.push(dec.eigenvalues[src]);
        let sign = column_sign((0..n).map(|i| dec.eigenvectors[(i, src)]));
        for i in 0..n {
            vectors[(i, col)] = sign * dec.eigenvectors[(i, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Checks that `a` is symmetric positive definite. Returns its eigenvalues.
pub fn check_spd(a: &Matrix) -> Result<Vec<f64>, MatError> {
    let asym = a.asymmetry().ok_or(MatError::NotSquare(a.shape()))?;
    let scale = a.max_abs().max(1.0);
    if asym > 1e-10 * scale {
        return Err(MatError::NotSymmetric(asym));
    }
    let values = sym_eigen(a)?.values;
    let min = *values.last().expect("nonempty");
    if min <= 1e-12 {
        return Err(MatError::NotPositiveDefinite(min));
    }
    Ok(values)
}

/// Moore–Penrose pseudo-inverse, truncating singular values below
/// `max(m, n) · ε · σ_max`.
pub fn pinv(a: &Matrix) -> Matrix {
    let dec = svd(a);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = a.rows().max(a.cols()) as f64 * f64::EPSILON * smax;
    let inv: Vec<f64> = dec
        .s
        .iter()
        .map(|&s| if s > cutoff { 1.0 / s } else { 0.0 })
        .collect();
    dec.v.scale_columns(&inv).matmul_t(&dec.u)
}

/// Q factor of a QR factorization with R's diagonal made nonnegative.
pub fn qr_q(a: &Matrix) -> Matrix {
    let dec = nalgebra::linalg::QR::new(to_nalgebra(a));
    let q = dec.q();
    let r = dec.r();
    let mut out = from_nalgebra(&q);
    for j in 0..out.cols() {
        if r[(j, j)] < 0.0 {
            for i in 0..out.rows() {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    out
}
