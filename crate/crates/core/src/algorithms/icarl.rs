use serde::{Deserialize, Serialize};

/// Greedy herding: repeatedly adds the feature that brings the running
/// selection mean closest to the full mean. Ties go to the lowest index.
pub fn herding_select(features: &[Vec<f64>], m: usize) -> Vec<usize> {
    let n = features.len();
    let m = m.min(n);
    if m == 0 {
        return Vec::new();
    }
    let dim = features[0].len();
    let mut mu = vec![0.0; dim];
    for f in features {
        for (a, b) in mu.iter_mut().zip(f) {
            *a += b / n as f64;
        }
    }
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut sum = vec![0.0; dim];
    for k in 1..=m {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in features.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d2: f64 = (0..dim)
                .map(|j| {
                    let diff = mu[j] - (sum[j] + f[j]) / k as f64;
                    diff * diff
                })
                .sum();
            if best.is_none_or(|(_, b)| d2 < b) {
                best = Some((i, d2));
            }
        }
        let (i, _) = best.expect("m <= n leaves a candidate");
        taken[i] = true;
        for (s, v) in sum.iter_mut().zip(&features[i]) {
            *s += v;
        }
        chosen.push(i);
    }
    chosen
}

/// Nearest class mean by Euclidean distance; ties go to the lowest index.
pub fn ncm_classify(feature: &[f64], class_means: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, mean) in class_means.iter().enumerate() {
        let d2: f64 = feature.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (c, d2);
        }
    }
    best.0
}

/// How exemplars are chosen at the end of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferSelection {
    #[default]
    Herding,
    Random,
}
