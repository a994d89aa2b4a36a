use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{norm, Batch, MlpModel};

/// Resamples allowed per random direction before it is skipped.
pub const MAX_RESAMPLES: usize = 8;

/// `s(r)` at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScore {
    pub r: f64,
    /// Mean ratio over the usable draws.
    pub score: f64,
    /// Standard error of that mean (0 with a single draw).
    pub std_err: f64,
    pub used: usize,
    pub skipped: usize,
    /// `L(θ* + r·v)`.
    pub loss_along_v: f64,
}

/// `s(r)` over a radius grid for one eigen-direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub direction_index: usize,
    pub n_random: usize,
    pub base_loss: f64,
    pub radii: Vec<f64>,
    pub points: Vec<PerturbationScore>,
}

impl PerturbationCurve {
    pub fn scores(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.score).collect()
    }

    pub fn raw_losses(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.loss_along_v).collect()
    }
}

/// `n` log-spaced radii from `lo` to `hi` inclusive.
pub fn log_radii(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// The 25-point grid on `[1e-3, 1e6]`.
pub fn default_radii() -> Vec<f64> {
    log_radii(25, 1e-3, 1e6)
}

fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn shifted(theta: &[f64], r: f64, dir: &[f64]) -> Vec<f64> {
    theta.iter().zip(dir).map(|(t, d)| t + r * d).collect()
}

/// `s(r) = E_μ' |L(θ*+r·v) − L(θ*)| / |L(θ*+r·μ') − L(θ*)|` for any loss.
///
/// `μ'` are seeded Gaussian directions scaled to unit norm. A draw whose
/// denominator is below `1e-12·|L(θ*)| + 1e-300` is redrawn up to
/// [`MAX_RESAMPLES`] times, then skipped.
pub fn perturbation_score_with<F>(loss: F, theta_star: &[f64], v: &[f64], r: f64, n_random: usize, seed: u64) -> Result<PerturbationScore>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if theta_star.len() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "perturbation direction",
            expected: theta_star.len(),
            actual: v.len(),
        });
    }
    if (norm(v) - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!("direction norm {} is not 1", norm(v))));
    }
    if !(r > 0.0) || n_random == 0 {
        return Err(Error::InvalidArgument(format!("need r > 0 and n_random > 0 (r = {r}, n = {n_random})")));
    }
    let base = loss(theta_star)?;
    let along = loss(&shifted(theta_star, r, v))?;
    let numerator = (along - base).abs();
    let floor = 1e-12 * base.abs() + 1e-300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(n_random);
    let mut skipped = 0;
    for _ in 0..n_random {
        let mut ratio = None;
        for _ in 0..=MAX_RESAMPLES {
            let mu = random_unit(&mut rng, theta_star.len());
            let den = (loss(&shifted(theta_star, r, &mu))? - base).abs();
            if den >= floor {
                ratio = Some(numerator / den);
                break;
            }
        }
        match ratio {
            Some(x) => ratios.push(x),
            None => skipped += 1,
        }
    }
    if ratios.is_empty() {
        return Err(Error::DegenerateDraws { draws: n_random });
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let std_err = if ratios.len() > 1 {
        let var = ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PerturbationScore {
        r,
        score: mean,
        std_err,
        used: ratios.len(),
        skipped,
        loss_along_v: along,
    })
}

/// [`perturbation_score_with`] on the model's batch-mean loss.
pub fn perturbation_score(
    model: &MlpModel,
    theta_star: &[f64],
    data: &Batch,
    v: &[f64],
    r: f64,
    n_random: usize,
    seed: u64,
) -> Result<PerturbationScore> {
    perturbation_score_with(|th| model.loss(th, data), theta_star, v, r, n_random, seed)
}

/// Per-radius seed for direction `i`, radius index `j`.
pub fn curve_seed(seed: u64, direction: usize, radius: usize) -> u64 {
    seed ^ ((direction as u64) << 32 | radius as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `s(r)` over `radii`, each radius on its own seeded stream.
pub fn perturbation_curve_with<F>(
    loss: F,
    theta_star: &[f64],
    v: &[f64],
    direction_index: usize,
    radii: &[f64],
    n_random: usize,
    seed: u64,
) -> Result<PerturbationCurve>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
    }
    let base_loss = loss(theta_star)?;
    let points = radii
        .iter()
        .enumerate()
        .map(|(j, &r)| perturbation_score_with(&loss, theta_star, v, r, n_random, curve_seed(seed, direction_index, j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationCurve {
        direction_index,
        n_random,
        base_loss,
        radii: radii.to_vec(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let r = default_radii();
        assert_eq!(r.len(), 25);
        assert!((r[0] - 1e-3).abs() < 1e-15);
        assert!((r[24] / 1e6 - 1.0).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn isotropic_is_one() {
        let loss = |t: &[f64]| Ok(1.0 + 1.5 * t.iter().map(|x| x * x).sum::<f64>());
        let v = [0.0, 1.0, 0.0];
        for r in [1e-3, 1.0, 1e4] {
            let s = perturbation_score_with(loss, &[0.0; 3], &v, r, 8, 3).unwrap();
            assert!((s.score - 1.0).abs() < 1e-9, "r {r}: {}", s.score);
        }
    }

    #[test]
    fn flat_loss_is_degenerate() {
        let loss = |_: &[f64]| Ok(2.0);
        let err = perturbation_score_with(loss, &[0.0, 0.0], &[1.0, 0.0], 1.0, 4, 1).unwrap_err();
        assert!(matches!(err, Error::DegenerateDraws { draws: 4 }));
    }

    #[test]
    fn rejects_non_unit_direction() {
        let loss = |t: &[f64]| Ok(t[0] * t[0]);
        assert!(perturbation_score_with(loss, &[0.0, 0.0], &[2.0, 0.0], 1.0, 4, 1).is_err());
    }
}
