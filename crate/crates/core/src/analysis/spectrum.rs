use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{dot, hessian_topk, Batch, LanczosResult, MlpModel};

/// Number of eigenvalues strictly above `threshold · max`. Negative values
/// count as zero; with `threshold = 0` this is the number of strictly
/// positive eigenvalues.
pub fn effective_rank(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidArgument("effective rank of an empty spectrum".into()));
    }
    let clamped = eigenvalues.iter().map(|&l| l.max(0.0));
    let max = clamped.clone().fold(0.0, f64::max);
    Ok(clamped.filter(|&l| l > threshold * max).count())
}

/// Seeded subsample of at most `n` inputs, without replacement, in the
/// original order. `n = None` keeps the full set.
pub fn hessian_subsample(data: &Batch, n: Option<usize>, seed: u64) -> Batch {
    match n {
        Some(n) if n < data.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, data.len(), n).into_vec();
            idx.sort_unstable();
            data.select(&idx)
        }
        _ => data.clone(),
    }
}

/// Top-`k` Hessian eigenpairs on a seeded subsample of `data`.
pub fn hessian_spectrum(
    model: &MlpModel,
    params: &[f64],
    data: &Batch,
    k: usize,
    subsample: Option<usize>,
    seed: u64,
) -> Result<LanczosResult> {
    let batch = hessian_subsample(data, subsample, seed);
    let p = model.param_count();
    let k = k.min(p);
    let max_iter = (3 * k + 30).min(p);
    hessian_topk(model, params, &batch, k, max_iter, seed)
}

/// `Δᵀ G Δ / (‖Δ‖² λ_max)` with `G` the Gauss–Newton matrix on `data`.
pub fn gauss_newton_ratio(model: &MlpModel, params: &[f64], data: &Batch, delta: &[f64], lambda_max: f64) -> Result<f64> {
    let gd = model.gauss_newton_vp(params, data, delta)?;
    Ok(dot(delta, &gd) / (dot(delta, delta) * lambda_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(effective_rank(&[1.0, 0.5, 1e-6], 0.01).unwrap(), 2);
        assert_eq!(effective_rank(&[0.0, 0.0], 0.1).unwrap(), 0);
        assert_eq!(effective_rank(&[3.0, 2.0, 1.0], 0.0).unwrap(), 3);
        assert_eq!(effective_rank(&[3.0, -2.0, 1.0], 0.0).unwrap(), 2);
        assert!(effective_rank(&[], 0.1).is_err());
    }
}
