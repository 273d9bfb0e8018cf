use super::{Problem, ProblemError};
use crate::matcore::random::{gaussian_matrix, rng_from_seed, SeededRng};
use crate::matcore::Matrix;

/// Noisy gradients G = ∇f(W) + N/√B with E‖N‖_F² = σ².
#[derive(Debug)]
pub struct StochasticGradOracle<P> {
    problem: P,
    sigma: f64,
    batch: usize,
    rng: SeededRng,
}

pub fn stochastic_oracle<P: Problem>(
    problem: P,
    sigma: f64,
    batch: usize,
    seed: u64,
) -> Result<StochasticGradOracle<P>, ProblemError> {
    if !(sigma >= 0.0 && sigma.is_finite()) || batch == 0 {
        return Err(ProblemError::InvalidArgument(format!("sigma {sigma}, batch {batch}")));
    }
    Ok(StochasticGradOracle {
        problem,
        sigma,
        batch,
        rng: rng_from_seed(seed),
    })
}

impl<P: Problem> StochasticGradOracle<P> {
    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Noise term alone, E‖·‖_F² = σ²/B.
    pub fn noise(&mut self, rows: usize, cols: usize) -> Matrix {
        if self.sigma == 0.0 {
            return Matrix::zeros(rows, cols);
        }
        let elem = self.sigma / ((rows * cols) as f64).sqrt() / (self.batch as f64).sqrt();
        gaussian_matrix(&mut self.rng, rows, cols).scale(elem)
    }

    pub fn sample(&mut self, w: &Matrix) -> Matrix {
        let mut g = self.problem.grad(w);
        if self.sigma > 0.0 {
            let n = self.noise(g.rows(), g.cols());
            g.axpy(1.0, &n);
        }
        g
    }
}
