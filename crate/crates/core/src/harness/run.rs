use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::analyze::{analyze_checkpoint, AnalysisKind};
use super::config::{CellSpec, ExperimentConfig};
use super::runlog::{atomic_write, load_run, save_run, RunAbort, RunLog};
use crate::algorithms::{train_task, LearnerState};
use crate::error::{Error, Result};
use crate::numerics::{norm, MlpModel, ParamVector};
use crate::tasks::TaskSequence;

/// Scores every task's test set at `params`; one entry per task.
fn evaluate_all(
    state: &LearnerState,
    model: &MlpModel,
    seq: &TaskSequence,
    params: &[f64],
    after: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut losses = Vec::with_capacity(seq.len());
    let mut accs = Vec::with_capacity(seq.len());
    for (o, task) in seq.tasks.iter().enumerate() {
        let allowed = seq.eval_classes(o, after.max(1));
        let e = state.evaluate(model, params, &task.test, allowed.as_deref())?;
        losses.push(e.loss);
        accs.push(e.accuracy);
    }
    Ok((losses, accs))
}

/// Trains one cell through the whole sequence, scoring all tasks after each.
///
/// On a training abort the returned log holds every completed task and
/// `aborted` is set.
pub fn run_cell(cell: &CellSpec, config_hash: &str) -> Result<RunLog> {
    let seq = cell.sequence.build()?;
    let model = cell.model.build_for(&seq)?;
    run_cell_on(cell, config_hash, &seq, &model)
}

/// [`run_cell`] with a prebuilt sequence and model.
pub fn run_cell_on(cell: &CellSpec, config_hash: &str, seq: &TaskSequence, model: &MlpModel) -> Result<RunLog> {
    let learner = &cell.learner;
    learner.validate()?;
    let mut state = LearnerState::new(learner.algorithm, learner);
    let theta0 = model.init_params(cell.seed);
    let (l0, a0) = evaluate_all(&state, model, seq, &theta0, 0)?;
    let mut log = RunLog {
        config_hash: config_hash.to_string(),
        learner: learner.label(),
        algorithm: learner.algorithm,
        lr: cell.lr,
        seed: cell.seed,
        task_count: seq.len(),
        checkpoints: vec![theta0.clone()],
        test_loss: vec![l0],
        test_acc: vec![a0],
        update_norms: Vec::with_capacity(seq.len()),
        distances: vec![0.0],
        memory: Vec::with_capacity(seq.len()),
        wall_seconds: Vec::with_capacity(seq.len()),
        aborted: None,
    };
    let mut theta: ParamVector = theta0.clone();
    for (t, task) in seq.tasks.iter().enumerate() {
        let start = Instant::now();
        let out = train_task(&mut state, learner, task, model, &theta)?;
        if let Some(a) = out.aborted {
            log.aborted = Some(RunAbort {
                task: t + 1,
                step: a.step,
                reason: a.reason,
            });
            break;
        }
        log.update_norms.push(norm(&out.params.sub(&theta)));
        theta = out.params;
        let (l, a) = evaluate_all(&state, model, seq, &theta, t + 1)?;
        log.test_loss.push(l);
        log.test_acc.push(a);
        log.distances.push(norm(&theta.sub(&theta0)));
        log.checkpoints.push(theta.clone());
        log.memory.push(state.summary());
        log.wall_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(log)
}

/// Runs and persists every learner of `config` at one (lr, seed). Returns
/// the cell directories. A training abort is saved, then reported as an error.
pub fn run_experiment(config: &ExperimentConfig, lr: f64, seed: u64) -> Result<Vec<PathBuf>> {
    config.validate()?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate {lr} is not positive")));
    }
    let root = config.output_path();
    let seq = config.sequence.build()?;
    let model = config.model.build_for(&seq)?;
    let mut dirs = Vec::with_capacity(config.learners.len());
    for learner in &config.learners {
        let cell = CellSpec::new(config, learner, lr, seed);
        let dir = root.join(cell.dir_name());
        let log = run_cell_on(&cell, &config.cell_hash(learner, lr, seed), &seq, &model)?;
        save_cell(&dir, &cell, &log)?;
        if let Some(a) = &log.aborted {
            return Err(Error::TrainingAborted {
                step: a.step,
                reason: format!("{} task {}: {}", log.learner, a.task, a.reason),
            });
        }
        dirs.push(dir);
    }
    Ok(dirs)
}

fn save_cell(dir: &Path, cell: &CellSpec, log: &RunLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = serde_json::to_vec_pretty(cell)?;
    atomic_write(&dir.join("cell.json"), &spec)?;
    save_run(dir, log)
}

/// Reads the `cell.json` written next to a run log.
pub fn load_cell(dir: &Path) -> Result<CellSpec> {
    let path = dir.join("cell.json");
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Aborted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub learner: String,
    pub algorithm: String,
    pub lr: f64,
    pub seed: u64,
    /// Relative to the sweep directory.
    pub dir: String,
    pub config_hash: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Whether this invocation computed the cell (false when resumed).
    #[serde(skip)]
    pub computed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub cells: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&text)?)
    }
}

fn run_sweep_cell(
    config: &ExperimentConfig,
    root: &Path,
    cell: CellSpec,
    learner_idx: usize,
    seq: &TaskSequence,
    model: &MlpModel,
) -> ManifestEntry {
    let learner = &config.learners[learner_idx];
    let hash = config.cell_hash(learner, cell.lr, cell.seed);
    let dir_name = cell.dir_name();
    let dir = root.join(&dir_name);
    let mut entry = ManifestEntry {
        learner: learner.label(),
        algorithm: learner.algorithm.name().into(),
        lr: cell.lr,
        seed: cell.seed,
        dir: dir_name,
        config_hash: hash.clone(),
        status: CellStatus::Ok,
        error: None,
        computed: false,
    };
    if let Ok(existing) = load_run(&dir) {
        if existing.config_hash == hash {
            if let Some(a) = existing.aborted {
                entry.status = CellStatus::Aborted;
                entry.error = Some(format!("task {} step {}: {}", a.task, a.step, a.reason));
            } else {
                run_toggled_analyses(config, &dir, &mut entry);
            }
            return entry;
        }
    }
    entry.computed = true;
    let result = run_cell_on(&cell, &hash, seq, model).and_then(|log| {
        save_cell(&dir, &cell, &log)?;
        Ok(log)
    });
    match result {
        Ok(log) => {
            if let Some(a) = log.aborted {
                entry.status = CellStatus::Aborted;
                entry.error = Some(format!("task {} step {}: {}", a.task, a.step, a.reason));
            } else {
                run_toggled_analyses(config, &dir, &mut entry);
            }
        }
        Err(e) => {
            entry.status = CellStatus::Failed;
            entry.error = Some(e.to_string());
        }
    }
    entry
}

/// Runs the analyses enabled in `config.analysis` whose output is missing.
fn run_toggled_analyses(config: &ExperimentConfig, dir: &Path, entry: &mut ManifestEntry) {
    let a = &config.analysis;
    let enabled = [
        (AnalysisKind::Distances, a.distances),
        (AnalysisKind::Spectrum, a.spectrum),
        (AnalysisKind::Perturbation, a.perturbation),
        (AnalysisKind::TheoremChecks, a.theorem_checks),
    ];
    for (kind, on) in enabled {
        if !on || dir.join(format!("analysis_{kind}.csv")).exists() {
            continue;
        }
        if let Err(e) = analyze_checkpoint(dir, kind, a) {
            entry.status = CellStatus::Failed;
            entry.error = Some(format!("analysis {kind}: {e}"));
            return;
        }
    }
}

/// Runs every (learner, lr, seed) cell on `jobs` threads, skipping cells whose
/// stored log matches the current config hash, then runs the enabled
/// analyses of each finished cell. Writes `config.json` first and
/// `manifest.json` once all cells have finished. Returns the manifest.
pub fn sweep(config: &ExperimentConfig, jobs: usize) -> Result<Manifest> {
    use rayon::prelude::*;

    config.validate()?;
    let root = config.output_path();
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    atomic_write(&root.join("config.json"), config.to_json().as_bytes())?;
    let seq = config.sequence.build()?;
    let model = config.model.build_for(&seq)?;
    let mut cells = Vec::new();
    for (li, learner) in config.learners.iter().enumerate() {
        for &lr in &config.lr_grid {
            for &seed in &config.seeds {
                cells.push((CellSpec::new(config, learner, lr, seed), li));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let entries: Vec<ManifestEntry> = pool.install(|| {
        cells
            .into_par_iter()
            .map(|(cell, li)| run_sweep_cell(config, &root, cell, li, &seq, &model))
            .collect()
    });
    let manifest = Manifest {
        name: config.name.clone(),
        cells: entries,
    };
    atomic_write(&root.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
