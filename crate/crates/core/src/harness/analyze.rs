use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::AnalysisToggles;
use super::run::load_cell;
use super::runlog::{atomic_write, load_run, RunLog};
use crate::analysis::{
    curve_seed, default_radii, effective_rank, hessian_spectrum, hessian_subsample, param_distance,
    perturbation_curve_with, DistanceRecord,
};
use crate::error::{Error, Result};
use crate::numerics::{dot, lanczos_topk, Batch, MlpModel, ParamVector};
use crate::tasks::TaskSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    Spectrum,
    Perturbation,
    TheoremChecks,
    Distances,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 4] = [
        AnalysisKind::Spectrum,
        AnalysisKind::Perturbation,
        AnalysisKind::TheoremChecks,
        AnalysisKind::Distances,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Spectrum => "spectrum",
            AnalysisKind::Perturbation => "perturbation",
            AnalysisKind::TheoremChecks => "theorem_checks",
            AnalysisKind::Distances => "distances",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnalysisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnalysisKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown analysis kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub task: usize,
    /// 0-based rank of the eigenvalue (0 = largest).
    pub index: usize,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub task: usize,
    pub threshold: f64,
    pub effective_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub task: usize,
    pub direction: usize,
    pub r: f64,
    pub score: f64,
    pub std_err: f64,
    pub used: usize,
    pub skipped: usize,
    pub loss_along_v: f64,
    pub base_loss: f64,
}

/// Quadratic-model checks after task `t`, on the Hessian subsamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRecord {
    pub t: usize,
    /// `(1/t) Σ_{o<t} [L_o(θ_t) − L_o(θ_o)]`.
    pub measured_forgetting: f64,
    /// Same average of the second-order Taylor model at each `θ_o`.
    pub quadratic_prediction: f64,
    /// `½ Δ_tᵀ H̄_{<t} Δ_t` with `H̄_{<t} = (1/t) Σ_{o<t} H_o(θ_o)`.
    pub theorem1_residual: f64,
    /// `Δ_tᵀ Ḡ Δ_t / (‖Δ_t‖² λ_max)`, `Ḡ` the mean Gauss–Newton matrix of
    /// past tasks at their solutions, `λ_max` that of task `t − 1`'s Hessian.
    pub gauss_newton_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisOutput {
    Spectrum {
        eigen: Vec<SpectrumRecord>,
        ranks: Vec<RankRecord>,
    },
    Perturbation(Vec<PerturbationRecord>),
    TheoremChecks(Vec<TheoremRecord>),
    Distances(Vec<DistanceRecord>),
}

fn checkpoint(log: &RunLog, t: usize) -> Result<&ParamVector> {
    log.checkpoints
        .get(t)
        .ok_or(Error::MissingCheckpoint { task: t, step: t })
}

fn task_data(seq: &TaskSequence, t: usize, toggles: &AnalysisToggles, seed: u64) -> Batch {
    hessian_subsample(&seq.tasks[t - 1].train, toggles.hessian_samples, seed ^ t as u64)
}

/// Runs one analysis over a stored run. The task data are regenerated from
/// the cell's `cell.json`.
pub fn analyze_run(log: &RunLog, seq: &TaskSequence, model: &MlpModel, kind: AnalysisKind, toggles: &AnalysisToggles) -> Result<AnalysisOutput> {
    let seed = log.seed;
    let tasks = log.tasks_done();
    match kind {
        AnalysisKind::Distances => Ok(AnalysisOutput::Distances(param_distance(log)?)),
        AnalysisKind::Spectrum => {
            let mut eigen = Vec::new();
            let mut ranks = Vec::new();
            for t in 1..=tasks {
                let data = task_data(seq, t, toggles, seed);
                let r = hessian_spectrum(model, checkpoint(log, t)?, &data, toggles.top_k, None, seed)?;
                for (i, &l) in r.pairs.eigenvalues.iter().enumerate() {
                    eigen.push(SpectrumRecord {
                        task: t,
                        index: i,
                        eigenvalue: l,
                    });
                }
                for &th in &toggles.rank_thresholds {
                    ranks.push(RankRecord {
                        task: t,
                        threshold: th,
                        effective_rank: effective_rank(&r.pairs.eigenvalues, th)?,
                    });
                }
            }
            Ok(AnalysisOutput::Spectrum { eigen, ranks })
        }
        AnalysisKind::Perturbation => {
            let mut out = Vec::new();
            let radii = default_radii();
            for t in 1..=tasks {
                let data = task_data(seq, t, toggles, seed);
                let theta = checkpoint(log, t)?;
                let r = hessian_spectrum(model, theta, &data, toggles.perturbation_directions, None, seed)?;
                for (i, v) in r.pairs.eigenvectors.iter().enumerate() {
                    let curve = perturbation_curve_with(
                        |th| model.loss(th, &data),
                        theta,
                        v,
                        i,
                        &radii,
                        toggles.n_random,
                        curve_seed(seed, t, 0),
                    )?;
                    for p in &curve.points {
                        out.push(PerturbationRecord {
                            task: t,
                            direction: i,
                            r: p.r,
                            score: p.score,
                            std_err: p.std_err,
                            used: p.used,
                            skipped: p.skipped,
                            loss_along_v: p.loss_along_v,
                            base_loss: curve.base_loss,
                        });
                    }
                }
            }
            Ok(AnalysisOutput::Perturbation(out))
        }
        AnalysisKind::TheoremChecks => {
            let data: Vec<Batch> = (1..=tasks).map(|t| task_data(seq, t, toggles, seed)).collect();
            let mut out = Vec::new();
            for t in 2..=tasks {
                let theta_t = checkpoint(log, t)?;
                let delta = theta_t.sub(checkpoint(log, t - 1)?);
                let tf = t as f64;
                let mut measured = 0.0;
                let mut predicted = 0.0;
                let mut residual = 0.0;
                let mut gn = 0.0;
                for o in 1..t {
                    let theta_o = checkpoint(log, o)?;
                    let d = theta_t.sub(theta_o);
                    let (l_o, g_o) = model.loss_and_grad(theta_o, &data[o - 1])?;
                    measured += (model.loss(theta_t, &data[o - 1])? - l_o) / tf;
                    let hd = model.hvp(theta_o, &data[o - 1], &d)?;
                    predicted += (dot(&d, &g_o) + 0.5 * dot(&d, &hd)) / tf;
                    residual += 0.5 * dot(&delta, &model.hvp(theta_o, &data[o - 1], &delta)?) / tf;
                    gn += dot(&delta, &model.gauss_newton_vp(theta_o, &data[o - 1], &delta)?) / (tf - 1.0);
                }
                let prev = checkpoint(log, t - 1)?;
                let p = model.param_count();
                let top = lanczos_topk(
                    |v| model.hvp(prev, &data[t - 2], v).expect("shapes checked above").into_vec(),
                    p,
                    1,
                    p.min(40),
                    seed,
                )?;
                let lmax = top.pairs.max_eigenvalue().unwrap_or(f64::NAN);
                out.push(TheoremRecord {
                    t,
                    measured_forgetting: measured,
                    quadratic_prediction: predicted,
                    theorem1_residual: residual,
                    gauss_newton_ratio: gn / (dot(&delta, &delta) * lmax),
                });
            }
            Ok(AnalysisOutput::TheoremChecks(out))
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

/// Loads the cell at `run_dir`, runs `kind` and writes
/// `analysis_<kind>.csv` (spectrum also writes `analysis_effective_rank.csv`).
pub fn analyze_checkpoint(run_dir: &Path, kind: AnalysisKind, toggles: &AnalysisToggles) -> Result<AnalysisOutput> {
    let log = load_run(run_dir)?;
    let cell = load_cell(run_dir)?;
    let seq = cell.sequence.build()?;
    let model = cell.model.build_for(&seq)?;
    let out = analyze_run(&log, &seq, &model, kind, toggles)?;
    let path = run_dir.join(format!("analysis_{kind}.csv"));
    match &out {
        AnalysisOutput::Distances(r) => write_csv(&path, r)?,
        AnalysisOutput::Spectrum { eigen, ranks } => {
            write_csv(&path, eigen)?;
            write_csv(&run_dir.join("analysis_effective_rank.csv"), ranks)?;
        }
        AnalysisOutput::Perturbation(r) => write_csv(&path, r)?,
        AnalysisOutput::TheoremChecks(r) => write_csv(&path, r)?,
    }
    Ok(out)
}
