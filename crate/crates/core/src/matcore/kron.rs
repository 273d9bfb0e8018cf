use super::{MatError, Matrix};

/// Largest Kronecker product (in entries) that [`kron`] will build.
pub const KRON_MAX_ENTRIES: usize = 1_000_000;

/// Standard Kronecker product. Under row-major vectorization it satisfies
/// `(P ⊗ Q) · vec_row(D) = vec_row(P · D · Qᵀ)`.
pub fn kron(p: &Matrix, q: &Matrix) -> Result<Matrix, MatError> {
    let rows = p.rows() * q.rows();
    let cols = p.cols() * q.cols();
    if rows.saturating_mul(cols) > KRON_MAX_ENTRIES {
        return Err(MatError::TooLarge { rows, cols });
    }
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let pij = p[(i, j)];
            for k in 0..q.rows() {
                for l in 0..q.cols() {
                    out[(i * q.rows() + k, j * q.cols() + l)] = pij * q[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Dense matrix–vector product, for brute-force oracles.
pub fn matvec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols(), x.len());
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}
