//! Seeded random matrix generators. Every generator takes the RNG explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::decomp::qr_q;
use super::Matrix;

/// The RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed from a base seed and a stream index
/// (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_raw(rows, cols, gaussian_vec(rng, rows * cols))
}

/// i.i.d. entries uniform on `[lo, hi)`.
pub fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Haar-distributed orthogonal n×n matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    qr_q(&gaussian_matrix(rng, n, n))
}

/// m×k matrix with orthonormal columns (k ≤ m).
pub fn random_orthonormal_columns<R: Rng + ?Sized>(rng: &mut R, m: usize, k: usize) -> Matrix {
    assert!(k <= m);
    qr_q(&gaussian_matrix(rng, m, k)).columns(0, k)
}

/// R · diag(values) · Rᵀ with Haar R.
pub fn matrix_with_spectrum<R: Rng + ?Sized>(rng: &mut R, values: &[f64]) -> Matrix {
    let q = random_orthogonal(rng, values.len());
    q.scale_columns(values).matmul_t(&q).symmetrize()
}

/// Random SPD matrix with eigenvalues log-uniform in `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Matrix {
    let (a, b) = (lo.ln(), hi.ln());
    let values: Vec<f64> = (0..n).map(|_| rng.random_range(a..=b).exp()).collect();
    matrix_with_spectrum(rng, &values)
}

/// Random m×n matrix with prescribed singular values (length ≤ min(m, n)).
pub fn matrix_with_singular_values<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, s: &[f64]) -> Matrix {
    let k = s.len();
    let u = random_orthonormal_columns(rng, m, k);
    let v = random_orthonormal_columns(rng, n, k);
    u.scale_columns(s).matmul_t(&v)
}
