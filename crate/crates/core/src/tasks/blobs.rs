use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, norm, Batch};

/// Gaussian class clusters with unit covariance.
///
/// Class `c` is centred at `separation · u_c` for a seeded random unit
/// direction `u_c`. When `classes ≤ dim` the directions are orthonormalized,
/// so every pair of centres sits `separation·√2` apart. Samples are stored
/// class-major.
pub fn synth_blobs(n_per_class: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Batch> {
    if classes < 2 || dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "synth_blobs needs classes >= 2 and dim >= 2 (got {classes}, {dim})"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while dirs.len() < classes {
        let mut u: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if classes <= dim {
            for d in &dirs {
                let c = dot(&u, d);
                axpy(&mut u, -c, d);
            }
        }
        let n = norm(&u);
        if n < 1e-8 {
            continue;
        }
        u.iter_mut().for_each(|v| *v /= n);
        dirs.push(u);
    }
    let mut inputs = Vec::with_capacity(n_per_class * classes * dim);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for (c, u) in dirs.iter().enumerate() {
        for _ in 0..n_per_class {
            for &uj in u {
                let noise: f64 = StandardNormal.sample(&mut rng);
                inputs.push(separation * uj + noise);
            }
            labels.push(c);
        }
    }
    Batch::classification(dim, inputs, labels)
}
