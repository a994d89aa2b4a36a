use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// Path-integral importance state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    pub path_integral_w: ParamVector,
    pub omega: ParamVector,
    pub anchor: ParamVector,
    pub task_start: ParamVector,
    pub consolidations: usize,
}

impl SiState {
    /// Fresh state with the current task starting at `params`.
    pub fn new(params: &[f64]) -> Self {
        let p = params.len();
        SiState {
            path_integral_w: ParamVector::zeros(p),
            omega: ParamVector::zeros(p),
            anchor: ParamVector::from_vec(params.to_vec()),
            task_start: ParamVector::from_vec(params.to_vec()),
            consolidations: 0,
        }
    }

    /// Gradient of `c Σ Ω_i (θ_i − anchor_i)²`.
    pub fn penalty_grad(&self, params: &[f64], c: f64) -> ParamVector {
        ParamVector::from_vec(
            params
                .iter()
                .zip(self.anchor.iter())
                .zip(self.omega.iter())
                .map(|((p, a), o)| 2.0 * c * o * (p - a))
                .collect(),
        )
    }
}

/// `w ← w − grad ⊙ delta` for one optimizer step.
pub fn si_accumulate(state: &mut SiState, grad: &[f64], delta_step: &[f64]) {
    for ((w, g), d) in state.path_integral_w.iter_mut().zip(grad).zip(delta_step) {
        *w -= g * d;
    }
}

/// Folds the task's path integral into `Ω` and starts a new task at `params`.
pub fn si_consolidate(state: &mut SiState, params: &[f64], xi: f64) -> Result<()> {
    if !(xi > 0.0) {
        return Err(Error::InvalidArgument(format!("si_xi must be positive, got {xi}")));
    }
    for i in 0..params.len() {
        let disp = params[i] - state.task_start[i];
        state.omega[i] += state.path_integral_w[i].max(0.0) / (disp * disp + xi);
        state.path_integral_w[i] = 0.0;
    }
    state.anchor = ParamVector::from_vec(params.to_vec());
    state.task_start = state.anchor.clone();
    state.consolidations += 1;
    Ok(())
}
