use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, sub, ParamVector};
use crate::tasks::QuadraticTaskSpec;

/// `(θ_t − θ_o)ᵀg_o + ½(θ_t − θ_o)ᵀH_o(θ_t − θ_o)`, the quadratic model's
/// forgetting on a task expanded at `θ_o = spec.theta_star`.
pub fn quad_forget_direct(theta_t: &[f64], spec: &QuadraticTaskSpec) -> f64 {
    let d = sub(theta_t, &spec.theta_star);
    dot(&d, &spec.grad_at_min) + 0.5 * spec.hessian.quad_form(&d)
}

/// Quadratic tasks expanded at their own solutions, and the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadHistory {
    /// Task `o` expanded at `θ_o`: `theta_star = θ_o`, `grad_at_min = ∇L_o(θ_o)`.
    pub specs: Vec<QuadraticTaskSpec>,
    pub thetas: Vec<ParamVector>,
    /// `Δ_t = θ_t − θ_{t−1}` for `t ≥ 2` (entry 0 is zero).
    pub deltas: Vec<ParamVector>,
    /// `Σ_{o ≤ t−2} H_o (θ_{t−1} − θ_o)` for the latest `t`.
    pub v_vector: ParamVector,
}

impl QuadHistory {
    /// History of tasks `specs[o]` evaluated along `thetas` (`θ_1..θ_T`).
    /// Each task is re-expanded at its own `θ_o`.
    pub fn new(tasks: &[QuadraticTaskSpec], thetas: &[ParamVector]) -> Result<Self> {
        if tasks.len() != thetas.len() {
            return Err(Error::InvalidArgument(format!(
                "{} tasks but {} solutions",
                tasks.len(),
                thetas.len()
            )));
        }
        let mut h = QuadHistory {
            specs: Vec::with_capacity(tasks.len()),
            thetas: Vec::with_capacity(tasks.len()),
            deltas: Vec::with_capacity(tasks.len()),
            v_vector: ParamVector::zeros(tasks.first().map_or(0, |s| s.dim())),
        };
        for (spec, theta) in tasks.iter().zip(thetas) {
            h.push(recentered(spec, theta)?, theta.clone())?;
        }
        Ok(h)
    }

    /// Appends task `t` with its solution, updating `Δ_t` and `v`.
    pub fn push(&mut self, spec: QuadraticTaskSpec, theta: ParamVector) -> Result<()> {
        let p = self.v_vector.len();
        if spec.dim() != p || theta.len() != p {
            return Err(Error::DimensionMismatch {
                what: "quadratic history",
                expected: p,
                actual: theta.len(),
            });
        }
        let delta = match self.thetas.last() {
            Some(prev) => theta.sub(prev),
            None => ParamVector::zeros(p),
        };
        let t = self.thetas.len() + 1;
        let mut v = ParamVector::zeros(p);
        if t >= 3 {
            let prev = &self.thetas[t - 2];
            for o in 0..t - 2 {
                let d = prev.sub(&self.thetas[o]);
                v.axpy(1.0, &self.specs[o].hessian.matvec(&d));
            }
        }
        self.v_vector = v;
        self.specs.push(spec);
        self.thetas.push(theta);
        self.deltas.push(delta);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// The task re-expanded at `theta`: same Hessian, gradient `∇L(θ)`, offset
/// `L(θ)`.
pub fn recentered(spec: &QuadraticTaskSpec, theta: &[f64]) -> Result<QuadraticTaskSpec> {
    if theta.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            what: "expansion point",
            expected: spec.dim(),
            actual: theta.len(),
        });
    }
    Ok(spec.expanded_at(theta))
}

/// `E(t)` by the one-step recursion, run forward from `E(1) = 0`.
pub fn quad_forget_recursive(history: &QuadHistory, t: usize) -> Result<f64> {
    if t == 0 || t > history.len() {
        return Err(Error::InvalidArgument(format!(
            "history has {} tasks, asked for E({t})",
            history.len()
        )));
    }
    let p = history.v_vector.len();
    let mut e = 0.0;
    let mut grad_sum = ParamVector::zeros(p);
    for s in 2..=t {
        let o_new = s - 2;
        grad_sum.axpy(1.0, &history.specs[o_new].grad_at_min);
        let delta = &history.deltas[s - 1];
        let mut curv = 0.0;
        let mut v = ParamVector::zeros(p);
        let prev = &history.thetas[s - 2];
        for o in 0..s - 1 {
            let hd = history.specs[o].hessian.matvec(delta);
            curv += dot(delta, &hd);
            if o + 2 <= s - 1 {
                v.axpy(1.0, &history.specs[o].hessian.matvec(&prev.sub(&history.thetas[o])));
            }
        }
        let sf = s as f64;
        e = (sf - 1.0) / sf * e + dot(delta, &grad_sum) / sf + curv / (2.0 * sf) + dot(&v, delta) / sf;
    }
    Ok(e)
}

/// `(1/t) Σ_{o ≤ t} quad_forget_direct(θ_t, task o)`.
pub fn quad_forget_average_direct(history: &QuadHistory, t: usize) -> Result<f64> {
    if t == 0 || t > history.len() {
        return Err(Error::InvalidArgument(format!(
            "history has {} tasks, asked for E({t})",
            history.len()
        )));
    }
    let theta = &history.thetas[t - 1];
    let total: f64 = history.specs[..t].iter().map(|s| quad_forget_direct(theta, s)).sum();
    Ok(total / t as f64)
}

/// `½ Δᵀ H̄ Δ` for the averaged-Hessian operator `avg_hessian_apply`.
pub fn theorem1_residual(delta: &[f64], avg_hessian_apply: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    0.5 * dot(delta, &avg_hessian_apply(delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    fn spec(theta: Vec<f64>, g: Vec<f64>, h: DenseMatrix) -> QuadraticTaskSpec {
        QuadraticTaskSpec::new(ParamVector::from_vec(theta), ParamVector::from_vec(g), h, 0.0).unwrap()
    }

    #[test]
    fn direct_examples() {
        let s = spec(vec![0.0, 0.0], vec![0.0, 0.0], DenseMatrix::identity(2));
        assert_eq!(quad_forget_direct(&[0.0, 0.0], &s), 0.0);
        assert!((quad_forget_direct(&[1.0, 1.0], &s) - 1.0).abs() < 1e-15);
        let lin = spec(vec![0.0, 0.0], vec![1.0, 0.0], DenseMatrix::zeros(2));
        assert_eq!(quad_forget_direct(&[2.0, 5.0], &lin), 2.0);
    }

    #[test]
    fn two_task_recursion_example() {
        let s1 = spec(vec![0.0, 0.0], vec![0.0, 0.0], DenseMatrix::identity(2));
        let s2 = spec(vec![1.0, 1.0], vec![0.0, 0.0], DenseMatrix::identity(2));
        let h = QuadHistory::new(&[s1, s2], &[ParamVector::zeros(2), ParamVector::from_vec(vec![1.0, 1.0])]).unwrap();
        assert!((quad_forget_recursive(&h, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((quad_forget_average_direct(&h, 2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(quad_forget_recursive(&h, 1).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let hbar = DenseMatrix::from_diag(&[2.0, 0.0]);
        assert!((theorem1_residual(&[1.0, 0.0], |v| hbar.matvec(v)) - 1.0).abs() < 1e-15);
        assert_eq!(theorem1_residual(&[0.0, 3.0], |v| hbar.matvec(v)), 0.0);
        assert_eq!(theorem1_residual(&[0.0, 0.0], |v| hbar.matvec(v)), 0.0);
    }
}
