use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decomp::{check_spd, singular_values};
use super::random::gaussian_vec;
use super::{MatError, Matrix};

pub fn frobenius_norm(a: &Matrix) -> f64 {
    // Scaled accumulation avoids overflow for huge entries.
    let scale = a.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let ss: f64 = a.as_slice().iter().map(|v| (v / scale).powi(2)).sum();
    scale * ss.sqrt()
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> f64 {
    singular_values(a).iter().sum()
}

/// Largest singular value from a full SVD.
pub fn operator_norm(a: &Matrix) -> f64 {
    singular_values(a)[0]
}

/// Power-iteration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            seed: 0x5eed,
        }
    }
}

/// Spectral-norm estimate with convergence metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// True when power iteration stalled and the value came from a full SVD.
    pub svd_fallback: bool,
}

/// Largest singular value by power iteration on AᵀA, falling back to a full
/// SVD when the iteration does not settle within `max_iter`.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralEstimate, MatError> {
    spectral_norm_with(
        a,
        &PowerIteration {
            tol,
            max_iter,
            ..PowerIteration::default()
        },
    )
}

pub fn spectral_norm_with(a: &Matrix, cfg: &PowerIteration) -> Result<SpectralEstimate, MatError> {
    if !(cfg.tol > 0.0) {
        return Err(MatError::InvalidArgument("tol must be positive".into()));
    }
    if a.is_zero() {
        return Ok(SpectralEstimate {
            value: 0.0,
            iterations: 0,
            svd_fallback: false,
        });
    }
    let n = a.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = Matrix::from_raw(n, 1, gaussian_vec(&mut rng, n));
    normalize(&mut v);

    let mut prev = 0.0;
    let mut prev_delta = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let av = a.matmul(&v);
        let est = frobenius_norm(&av);
        let mut w = a.t_matmul(&av);
        if normalize(&mut w) == 0.0 {
            break;
        }
        v = w;
        let delta = (est - prev).abs();
        // Predict the remaining error from the observed linear contraction.
        let q = if prev_delta.is_finite() && prev_delta > 0.0 {
            (delta / prev_delta).min(0.999_999)
        } else {
            0.5
        };
        let remaining = delta * q / (1.0 - q);
        if it > 2 && remaining <= 0.1 * cfg.tol * est {
            return Ok(SpectralEstimate {
                value: est,
                iterations: it,
                svd_fallback: false,
            });
        }
        prev_delta = delta;
        prev = est;
    }
    Ok(SpectralEstimate {
        value: operator_norm(a),
        iterations: cfg.max_iter,
        svd_fallback: true,
    })
}

fn normalize(v: &mut Matrix) -> f64 {
    let nrm = frobenius_norm(v);
    if nrm > 0.0 {
        v.scale_mut(1.0 / nrm);
    }
    nrm
}

/// ‖A‖_Λ = sqrt(tr(A Λ Aᵀ)) for symmetric positive definite Λ.
pub fn lambda_norm(a: &Matrix, lambda: &Matrix) -> Result<f64, MatError> {
    if lambda.shape() != (a.cols(), a.cols()) {
        return Err(MatError::ShapeMismatch {
            left: a.shape(),
            right: lambda.shape(),
        });
    }
    check_spd(lambda)?;
    Ok(lambda_norm_unchecked(a, lambda))
}

/// [`lambda_norm`] without the positive-definiteness check.
pub fn lambda_norm_unchecked(a: &Matrix, lambda: &Matrix) -> f64 {
    a.dot(&a.matmul(lambda)).max(0.0).sqrt()
}
