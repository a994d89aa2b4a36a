//! Lanczos iteration with full reorthogonalization for the top of a
//! symmetric spectrum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use super::vector::{axpy, dot, norm, ParamVector};
use crate::error::{Error, Result};

/// Eigenvalues in descending order with their unit eigenvectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EigenPairs {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<ParamVector>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_eigenvalue(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }
}

/// Result of [`lanczos_topk`].
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub pairs: EigenPairs,
    /// Krylov steps actually taken.
    pub iterations: usize,
    /// Set when the Krylov space became invariant before `k` Ritz pairs were
    /// available; `pairs` then holds only what that subspace supports.
    pub breakdown: bool,
}

/// Top-`k` algebraic eigenpairs of the symmetric operator `op` on `R^dim`.
///
/// Runs `min(max_iter, dim)` Lanczos steps from a seeded Gaussian start
/// vector, reorthogonalizing every new vector against the whole basis
/// (two passes of classical Gram–Schmidt). The caller guarantees symmetry.
pub fn lanczos_topk<F>(op: F, dim: usize, k: usize, max_iter: usize, seed: u64) -> Result<LanczosResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if k == 0 || k > dim.min(max_iter) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= k <= min(dim, max_iter); got k={k}, dim={dim}, max_iter={max_iter}"
        )));
    }
    let steps = max_iter.min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n0 = norm(&q);
    q.iter_mut().for_each(|v| *v /= n0);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut breakdown = false;
    let mut scale = 0.0f64;

    for j in 0..steps {
        let mut w = op(&q);
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "operator output",
                expected: dim,
                actual: w.len(),
            });
        }
        let a = dot(&w, &q);
        alpha.push(a);
        basis.push(q);
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                axpy(&mut w, -c, v);
            }
        }
        let b = norm(&w);
        scale = scale.max(a.abs()).max(b);
        if j + 1 == steps {
            break;
        }
        if b <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            breakdown = true;
            break;
        }
        beta.push(b);
        q = w.into_iter().map(|v| v / b).collect();
    }

    let m = alpha.len();
    let mut t = DenseMatrix::zeros(m);
    for i in 0..m {
        t.set(i, i, alpha[i]);
        if i + 1 < m {
            t.set(i, i + 1, beta[i]);
            t.set(i + 1, i, beta[i]);
        }
    }
    let eig = t.sym_eigen();
    let take = k.min(m);
    let mut pairs = EigenPairs::default();
    for (value, y) in eig.values.iter().zip(&eig.vectors).take(take) {
        let mut v = vec![0.0; dim];
        for (coef, qv) in y.iter().zip(&basis) {
            axpy(&mut v, *coef, qv);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        pairs.eigenvalues.push(*value);
        pairs.eigenvectors.push(ParamVector::from_vec(v));
    }
    Ok(LanczosResult {
        pairs,
        iterations: m,
        breakdown: breakdown && take < k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
        move |x: &[f64]| x.iter().zip(&d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn diagonal_operator_top_two() {
        let r = lanczos_topk(diag_op(vec![3.0, 2.0, 1.0]), 3, 2, 3, 7).unwrap();
        assert!((r.pairs.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((r.pairs.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((r.pairs.eigenvectors[0][0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_breaks_down_after_one_step() {
        let r = lanczos_topk(|x: &[f64]| x.to_vec(), 5, 1, 5, 1).unwrap();
        assert!((r.pairs.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert_eq!(r.iterations, 1);
        assert!(!r.breakdown);
        let flagged = lanczos_topk(|x: &[f64]| x.to_vec(), 5, 3, 5, 1).unwrap();
        assert!(flagged.breakdown);
        assert_eq!(flagged.pairs.len(), 1);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(lanczos_topk(|x: &[f64]| x.to_vec(), 3, 0, 3, 1).is_err());
        assert!(lanczos_topk(|x: &[f64]| x.to_vec(), 3, 4, 10, 1).is_err());
        assert!(lanczos_topk(|x: &[f64]| x.to_vec(), 10, 4, 3, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let op = diag_op((1..=20).map(|i| i as f64).collect());
        let a = lanczos_topk(&op, 20, 3, 8, 42).unwrap();
        let b = lanczos_topk(&op, 20, 3, 8, 42).unwrap();
        assert_eq!(a.pairs, b.pairs);
    }
}
