use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::RunLog;
use crate::numerics::norm;

/// Loss- and accuracy-based forgetting after each task.
///
/// Row `t − 1` of the per-task matrices holds `o = 1..=t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    /// `E_o(θ_t) = L_o(θ_t) − L_o(θ_o)`.
    pub per_task_loss_forgetting: Vec<Vec<f64>>,
    /// `ACC_o(θ_o) − ACC_o(θ_t)`.
    pub per_task_acc_forgetting: Vec<Vec<f64>>,
    /// `E(t)`: mean of `E_o(θ_t)` over `o ≤ t`.
    pub average_forgetting: Vec<f64>,
    /// Mean accuracy forgetting over `o ≤ t`.
    pub average_acc_forgetting: Vec<f64>,
    /// `ACC(t)`: mean of `ACC_o(θ_t)` over `o ≤ t`.
    pub average_accuracy: Vec<f64>,
}

/// Forgetting from `[checkpoint][task]` tables whose row 0 is the
/// initialization.
pub fn forgetting_from_tables(loss: &[Vec<f64>], acc: &[Vec<f64>], tasks: usize) -> Result<ForgettingReport> {
    let get = |table: &[Vec<f64>], t: usize, o: usize| -> Result<f64> {
        match table.get(t).and_then(|row| row.get(o - 1)) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(Error::MissingCheckpoint { task: o, step: t }),
        }
    };
    let mut report = ForgettingReport {
        per_task_loss_forgetting: Vec::with_capacity(tasks),
        per_task_acc_forgetting: Vec::with_capacity(tasks),
        average_forgetting: Vec::with_capacity(tasks),
        average_acc_forgetting: Vec::with_capacity(tasks),
        average_accuracy: Vec::with_capacity(tasks),
    };
    for t in 1..=tasks {
        let mut le = Vec::with_capacity(t);
        let mut ae = Vec::with_capacity(t);
        let mut acc_now = 0.0;
        for o in 1..=t {
            le.push(get(loss, t, o)? - get(loss, o, o)?);
            ae.push(get(acc, o, o)? - get(acc, t, o)?);
            acc_now += get(acc, t, o)?;
        }
        report.average_forgetting.push(le.iter().sum::<f64>() / t as f64);
        report.average_acc_forgetting.push(ae.iter().sum::<f64>() / t as f64);
        report.average_accuracy.push(acc_now / t as f64);
        report.per_task_loss_forgetting.push(le);
        report.per_task_acc_forgetting.push(ae);
    }
    Ok(report)
}

/// Forgetting of every completed task of a run.
pub fn compute_forgetting(log: &RunLog) -> Result<ForgettingReport> {
    forgetting_from_tables(&log.test_loss, &log.test_acc, log.task_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub t: usize,
    /// `‖θ_t − θ_0‖`.
    pub from_init: f64,
    /// `‖θ_t − θ_{t−1}‖`, 0 at `t = 0`.
    pub step: f64,
}

/// Distances travelled from the initialization, per stored checkpoint.
pub fn param_distance(log: &RunLog) -> Result<Vec<DistanceRecord>> {
    let theta0 = log
        .checkpoints
        .first()
        .ok_or(Error::MissingCheckpoint { task: 0, step: 0 })?;
    Ok(log
        .checkpoints
        .iter()
        .enumerate()
        .map(|(t, th)| DistanceRecord {
            t,
            from_init: norm(&th.sub(theta0)),
            step: if t == 0 { 0.0 } else { norm(&th.sub(&log.checkpoints[t - 1])) },
        })
        .collect())
}
