use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, sub, DenseMatrix, ParamVector};

/// An explicit quadratic task
/// `L(θ) = offset + (θ − θ*)ᵀg + ½(θ − θ*)ᵀH(θ − θ*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTaskSpec {
    pub theta_star: ParamVector,
    pub grad_at_min: ParamVector,
    pub hessian: DenseMatrix,
    pub offset: f64,
    /// When set, `grad_at_min` is identically zero.
    pub local_minimum: bool,
}

impl QuadraticTaskSpec {
    /// Validates shapes, symmetry (to 1e-12) and positive semi-definiteness
    /// (smallest eigenvalue ≥ −1e-10).
    pub fn new(
        theta_star: ParamVector,
        grad_at_min: ParamVector,
        hessian: DenseMatrix,
        offset: f64,
    ) -> Result<Self> {
        let p = theta_star.len();
        if grad_at_min.len() != p {
            return Err(Error::DimensionMismatch {
                what: "gradient at minimum",
                expected: p,
                actual: grad_at_min.len(),
            });
        }
        if hessian.dim() != p {
            return Err(Error::DimensionMismatch {
                what: "hessian",
                expected: p,
                actual: hessian.dim(),
            });
        }
        let asym = hessian.asymmetry();
        if asym > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "hessian not symmetric (max asymmetry {asym:e})"
            )));
        }
        if p > 0 {
            let min = *hessian.sym_eigen().values.last().unwrap();
            if min < -1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "hessian not PSD (smallest eigenvalue {min:e})"
                )));
            }
        }
        let local_minimum = grad_at_min.iter().all(|&g| g == 0.0);
        Ok(QuadraticTaskSpec {
            theta_star,
            grad_at_min,
            hessian,
            offset,
            local_minimum,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let d = sub(theta, &self.theta_star);
        self.offset + dot(&d, &self.grad_at_min) + 0.5 * self.hessian.quad_form(&d)
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        let d = sub(theta, &self.theta_star);
        self.hessian
            .matvec(&d)
            .into_iter()
            .zip(self.grad_at_min.iter())
            .map(|(h, g)| h + g)
            .collect()
    }

    pub fn hessian_apply(&self, v: &[f64]) -> Vec<f64> {
        self.hessian.matvec(v)
    }

    /// The same quadratic written around `theta`. The Hessian is already
    /// validated, so nothing is rechecked.
    pub fn expanded_at(&self, theta: &[f64]) -> QuadraticTaskSpec {
        let grad = ParamVector::from_vec(self.grad(theta));
        QuadraticTaskSpec {
            local_minimum: grad.iter().all(|&g| g == 0.0),
            theta_star: ParamVector::from_vec(theta.to_vec()),
            grad_at_min: grad,
            hessian: self.hessian.clone(),
            offset: self.loss(theta),
        }
    }
}

/// `tasks` local-minimum quadratic tasks in dimension `p`.
///
/// Each Hessian is `B Bᵀ / rank` for a seeded `p × rank` standard Gaussian
/// factor `B` (zero when `rank = 0`). Minimizers are `spread · z_o` with
/// `z_o` standard Gaussian, so pairwise distances scale linearly with
/// `spread`.
pub fn make_quadratic_sequence(
    p: usize,
    tasks: usize,
    rank: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<QuadraticTaskSpec>> {
    if rank > p {
        return Err(Error::InvalidArgument(format!("rank {rank} exceeds dimension {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    (0..tasks)
        .map(|_| {
            let factor: Vec<f64> = (0..p * rank).map(|_| normal()).collect();
            let hessian = if rank == 0 {
                DenseMatrix::zeros(p)
            } else {
                DenseMatrix::gram_of_factor(p, rank, &factor).scaled(1.0 / rank as f64)
            };
            let theta: Vec<f64> = (0..p).map(|_| spread * normal()).collect();
            QuadraticTaskSpec::new(ParamVector::from_vec(theta), ParamVector::zeros(p), hessian, 0.0)
        })
        .collect()
}
