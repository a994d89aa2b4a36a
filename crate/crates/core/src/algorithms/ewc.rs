use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Batch, MlpModel, ParamVector};

/// Diagonal quadratic penalty state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherState {
    pub fisher_diag: ParamVector,
    pub anchor: ParamVector,
    pub consolidations: usize,
}

impl FisherState {
    pub fn new(p: usize) -> Self {
        FisherState {
            fisher_diag: ParamVector::zeros(p),
            anchor: ParamVector::zeros(p),
            consolidations: 0,
        }
    }
}

/// Decays the stored Fisher by `gamma`, adds the empirical Fisher diagonal
/// of `data` at `params` (mean squared per-sample gradient) and re-anchors.
pub fn ewc_consolidate(
    state: &FisherState,
    model: &MlpModel,
    params: &[f64],
    data: &Batch,
    gamma: f64,
) -> Result<FisherState> {
    if state.fisher_diag.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "fisher diagonal",
            expected: params.len(),
            actual: state.fisher_diag.len(),
        });
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empirical Fisher needs at least one sample".into()));
    }
    let mut fisher = state.fisher_diag.scaled(gamma);
    let w = 1.0 / data.len() as f64;
    for i in 0..data.len() {
        let (_, g) = model.loss_and_grad(params, &data.select(&[i]))?;
        for (f, gi) in fisher.iter_mut().zip(g.iter()) {
            *f += w * gi * gi;
        }
    }
    Ok(FisherState {
        fisher_diag: fisher,
        anchor: ParamVector::from_vec(params.to_vec()),
        consolidations: state.consolidations + 1,
    })
}

/// Gradient of `½λ Σ F_i (θ_i − anchor_i)²`.
pub fn ewc_penalty_grad(state: &FisherState, params: &[f64], lambda: f64) -> ParamVector {
    if state.consolidations == 0 {
        return ParamVector::zeros(params.len());
    }
    ParamVector::from_vec(
        params
            .iter()
            .zip(state.anchor.iter())
            .zip(state.fisher_diag.iter())
            .map(|((p, a), f)| lambda * f * (p - a))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(f: Vec<f64>, anchor: Vec<f64>) -> FisherState {
        FisherState {
            fisher_diag: ParamVector::from_vec(f),
            anchor: ParamVector::from_vec(anchor),
            consolidations: 1,
        }
    }

    #[test]
    fn penalty_formula() {
        let s = state(vec![1.0, 2.0], vec![0.0, 0.0]);
        let g = ewc_penalty_grad(&s, &[1.0, 1.0], 0.7);
        assert!((g[0] - 0.7).abs() < 1e-15 && (g[1] - 1.4).abs() < 1e-15);
        assert!(ewc_penalty_grad(&s, &[0.0, 0.0], 0.7).iter().all(|&v| v == 0.0));
        assert!(ewc_penalty_grad(&s, &[1.0, 1.0], 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unconsolidated_is_zero() {
        let s = FisherState::new(2);
        assert!(ewc_penalty_grad(&s, &[3.0, 1.0], 1.0).iter().all(|&v| v == 0.0));
    }
}
