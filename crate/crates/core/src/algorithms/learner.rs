use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::icarl::{herding_select, ncm_classify, BufferSelection};
use super::nullspace::nullspace_gd_step;
use super::ogd::{ogd_extend_basis, ogd_project, OgdBasis, OgdVariant};
use super::replay::{reservoir_extend, ReplayBuffer, ReplayItem};
use super::si::{si_accumulate, si_consolidate, SiState};
use super::{agem_project, ewc_consolidate, ewc_penalty_grad, Algorithm, FisherState, LearnerConfig};
use crate::error::{Error, Result};
use crate::numerics::{lanczos_topk, Batch, EigenPairs, Evaluation, MlpModel, ParamVector};
use crate::tasks::TaskDataset;

/// Exemplars of one class from one task, in selection order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarGroup {
    pub task_id: usize,
    pub class: usize,
    pub inputs: Vec<Vec<f64>>,
}

/// Stored past solutions and the top eigenpairs of their average Hessian.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NullspaceMemory {
    pub anchors: Vec<(ParamVector, Batch)>,
    pub pairs: EigenPairs,
}

/// Everything a learner carries between tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub algorithm: Algorithm,
    pub tasks_seen: usize,
    pub buffer: ReplayBuffer,
    pub fisher: Option<FisherState>,
    pub si: Option<SiState>,
    pub ogd: OgdBasis,
    pub exemplars: Vec<ExemplarGroup>,
    pub nullspace: NullspaceMemory,
}

/// Sizes of the learner memory, for logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySummary {
    pub buffer_items: usize,
    pub ogd_vectors: usize,
    pub ogd_saturated: bool,
    pub fisher_sum: f64,
    pub omega_sum: f64,
    pub exemplars: usize,
    pub nullspace_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLog {
    /// Training loss of each step's batch, before the update.
    pub losses: Vec<f64>,
    /// `‖θ_{k+1} − θ_k‖` per step.
    pub step_norms: Vec<f64>,
    /// Steps where the null-space projection left no admissible direction.
    pub exhausted_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    /// 1-based step within the task.
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    /// Final parameters, or the last finite ones when aborted.
    pub params: ParamVector,
    pub log: StepLog,
    pub aborted: Option<AbortInfo>,
}

impl LearnerState {
    pub fn new(algorithm: Algorithm, config: &LearnerConfig) -> Self {
        LearnerState {
            algorithm,
            tasks_seen: 0,
            buffer: ReplayBuffer::new(config.buffer_size),
            fisher: None,
            si: None,
            ogd: OgdBasis::default(),
            exemplars: Vec::new(),
            nullspace: NullspaceMemory::default(),
        }
    }

    pub fn summary(&self) -> MemorySummary {
        MemorySummary {
            buffer_items: self.buffer.len(),
            ogd_vectors: self.ogd.len(),
            ogd_saturated: self.ogd.saturated,
            fisher_sum: self.fisher.as_ref().map_or(0.0, |f| f.fisher_diag.iter().sum()),
            omega_sum: self.si.as_ref().map_or(0.0, |s| s.omega.iter().sum()),
            exemplars: self.exemplars.iter().map(|g| g.inputs.len()).sum(),
            nullspace_pairs: self.nullspace.pairs.len(),
        }
    }

    /// Class means of the exemplar features at `params`, for the classes in
    /// `allowed` (all stored classes when `None`). Sorted by class.
    pub fn class_means(
        &self,
        model: &MlpModel,
        params: &[f64],
        allowed: Option<&[usize]>,
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut classes: Vec<usize> = self.exemplars.iter().map(|g| g.class).collect();
        classes.sort_unstable();
        classes.dedup();
        if let Some(a) = allowed {
            classes.retain(|c| a.contains(c));
        }
        let mut out = Vec::with_capacity(classes.len());
        for c in classes {
            let mut mean = vec![0.0; model.feature_dim()];
            let mut count = 0usize;
            for g in self.exemplars.iter().filter(|g| g.class == c) {
                for x in &g.inputs {
                    let f = model.features(params, x)?;
                    mean.iter_mut().zip(&f).for_each(|(m, v)| *m += v);
                    count += 1;
                }
            }
            if count > 0 {
                mean.iter_mut().for_each(|m| *m /= count as f64);
                out.push((c, mean));
            }
        }
        Ok(out)
    }

    /// Test-set loss and accuracy as this learner predicts: iCarl-lite scores
    /// with the nearest exemplar mean once it holds exemplars, everything else
    /// with the network's argmax.
    pub fn evaluate(
        &self,
        model: &MlpModel,
        params: &[f64],
        batch: &Batch,
        allowed: Option<&[usize]>,
    ) -> Result<Evaluation> {
        let base = model.evaluate(params, batch, allowed)?;
        if self.algorithm != Algorithm::IcarlLite || self.exemplars.is_empty() {
            return Ok(base);
        }
        let means = self.class_means(model, params, allowed)?;
        if means.is_empty() {
            return Ok(base);
        }
        let labels = batch
            .labels()
            .ok_or_else(|| Error::InvalidArgument("nearest-mean scoring needs class labels".into()))?;
        let centers: Vec<Vec<f64>> = means.iter().map(|(_, m)| m.clone()).collect();
        let mut correct = 0usize;
        for (i, &y) in labels.iter().enumerate() {
            let f = model.features(params, batch.input(i))?;
            if means[ncm_classify(&f, &centers)].0 == y {
                correct += 1;
            }
        }
        Ok(Evaluation {
            loss: base.loss,
            accuracy: correct as f64 / labels.len() as f64,
        })
    }
}

fn task_rng(seed: u64, task_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task_id as u64);
    rng
}

fn seeded_subset(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut idx = sample(rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Trains `params_in` on one task with the learner's update rule, then
/// updates the learner memory from the final parameters.
///
/// Runs `epochs × ⌈n / batch_size⌉` plain SGD steps over seeded shuffles of
/// the training set. A non-finite loss or parameter stops training; the
/// outcome then carries the step, the last finite parameters and the partial
/// log, and the memory is left untouched.
pub fn train_task(
    state: &mut LearnerState,
    config: &LearnerConfig,
    task: &TaskDataset,
    model: &MlpModel,
    params_in: &[f64],
) -> Result<TaskOutcome> {
    config.validate()?;
    if config.algorithm != state.algorithm {
        return Err(Error::Config(format!(
            "learner state is {}, config is {}",
            state.algorithm, config.algorithm
        )));
    }
    let p = model.param_count();
    if params_in.len() != p {
        return Err(Error::DimensionMismatch {
            what: "parameters",
            expected: p,
            actual: params_in.len(),
        });
    }
    let train = &task.train;
    let mut rng = task_rng(config.seed, task.task_id);
    let mut theta = ParamVector::from_vec(params_in.to_vec());
    let mut log = StepLog::default();
    let lr = config.lr * config.lr_decay.powi(state.tasks_seen as i32);
    if config.algorithm == Algorithm::Si {
        match state.si.as_mut() {
            None => state.si = Some(SiState::new(params_in)),
            Some(s) => s.task_start = theta.clone(),
        }
    }

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch = train.select(chunk);
            let (loss, task_grad, update) = match step_direction(state, config, model, &theta, &batch, &mut rng, &mut log) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { sample }) => {
                    return Ok(aborted(theta, log, step, format!("non-finite loss at sample {sample}")));
                }
                Err(e) => return Err(e),
            };
            let delta = update.scaled(-lr);
            let next = theta.add(&delta);
            if !next.is_finite() {
                return Ok(aborted(theta, log, step, "non-finite parameters".into()));
            }
            if let Some(si) = state.si.as_mut() {
                si_accumulate(si, &task_grad, &delta);
            }
            log.losses.push(loss);
            log.step_norms.push(delta.norm());
            theta = next;
        }
    }

    end_of_task(state, config, task, model, &theta, &mut rng)?;
    state.tasks_seen += 1;
    Ok(TaskOutcome {
        params: theta,
        log,
        aborted: None,
    })
}

fn aborted(params: ParamVector, log: StepLog, step: usize, reason: String) -> TaskOutcome {
    TaskOutcome {
        params,
        log,
        aborted: Some(AbortInfo { step, reason }),
    }
}

/// Batch loss, raw task gradient and the update direction for one step.
fn step_direction(
    state: &LearnerState,
    config: &LearnerConfig,
    model: &MlpModel,
    theta: &ParamVector,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
    log: &mut StepLog,
) -> Result<(f64, ParamVector, ParamVector)> {
    let grad_of = |b: &Batch, rng: &mut ChaCha8Rng| model.loss_and_grad_dropout(theta, b, config.dropout, rng);
    let (loss, g) = match config.algorithm {
        Algorithm::Er | Algorithm::IcarlLite => match state.buffer.sample_batch(config.batch_size, rng) {
            Some(replay) => grad_of(&batch.concat(&replay)?, rng)?,
            None => grad_of(batch, rng)?,
        },
        _ => grad_of(batch, rng)?,
    };
    let mut update = match config.algorithm {
        Algorithm::Sgd | Algorithm::Er | Algorithm::IcarlLite => g.clone(),
        Algorithm::Agem => match state.buffer.sample_batch(config.batch_size, rng) {
            Some(reference) => {
                let (_, g_ref) = grad_of(&reference, rng)?;
                agem_project(&g, &g_ref)
            }
            None => g.clone(),
        },
        Algorithm::Ewc => match &state.fisher {
            Some(f) => g.add(&ewc_penalty_grad(f, theta, config.ewc_lambda)),
            None => g.clone(),
        },
        Algorithm::Si => match &state.si {
            Some(s) => g.add(&s.penalty_grad(theta, config.si_c)),
            None => g.clone(),
        },
        Algorithm::Ogd | Algorithm::OgdGtl => ogd_project(&g, &state.ogd),
        Algorithm::NullspaceGd => {
            let s = nullspace_gd_step(&g, &state.nullspace.pairs, config.nullspace_tol);
            if s.exhausted {
                log.exhausted_steps += 1;
            }
            s.direction
        }
    };
    if config.weight_decay > 0.0 {
        update.axpy(config.weight_decay, theta);
    }
    Ok((loss, g, update))
}

fn end_of_task(
    state: &mut LearnerState,
    config: &LearnerConfig,
    task: &TaskDataset,
    model: &MlpModel,
    theta: &ParamVector,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let train = &task.train;
    match config.algorithm {
        Algorithm::Sgd => {}
        Algorithm::Er | Algorithm::Agem => reservoir_extend(&mut state.buffer, train, task.task_id, rng)?,
        Algorithm::Ewc => {
            let prior = state.fisher.take().unwrap_or_else(|| FisherState::new(theta.len()));
            state.fisher = Some(ewc_consolidate(&prior, model, theta, train, config.ewc_gamma)?);
        }
        Algorithm::Si => {
            let si = state.si.as_mut().expect("initialized at task start");
            si_consolidate(si, theta, config.si_xi)?;
        }
        Algorithm::Ogd | Algorithm::OgdGtl => {
            let variant = if config.algorithm == Algorithm::Ogd {
                OgdVariant::Full
            } else {
                OgdVariant::Gtl
            };
            let idx = seeded_subset(train.len(), config.ogd_samples_per_task, rng);
            state.ogd = ogd_extend_basis(&state.ogd, model, theta, &train.select(&idx), variant)?;
        }
        Algorithm::IcarlLite => update_exemplars(state, config, task, model, theta, rng)?,
        Algorithm::NullspaceGd => {
            let idx = seeded_subset(train.len(), config.hessian_samples, rng);
            state.nullspace.anchors.push((theta.clone(), train.select(&idx)));
            state.nullspace.pairs = average_hessian_topk(model, &state.nullspace.anchors, config, rng)?;
        }
    }
    Ok(())
}

/// Top eigenpairs of `(1/n) Σ_o H_o(θ_o)` over the stored anchors.
fn average_hessian_topk(
    model: &MlpModel,
    anchors: &[(ParamVector, Batch)],
    config: &LearnerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EigenPairs> {
    let p = model.param_count();
    for (theta, batch) in anchors {
        model.hvp(theta, batch, &vec![0.0; p])?;
    }
    let k = config.nullspace_rank.min(p);
    let max_iter = (2 * k + 20).min(p);
    let w = 1.0 / anchors.len() as f64;
    let op = |v: &[f64]| {
        let mut acc = vec![0.0; p];
        for (theta, batch) in anchors {
            let hv = model.hvp(theta, batch, v).expect("validated above");
            acc.iter_mut().zip(hv.iter()).for_each(|(a, h)| *a += w * h);
        }
        acc
    };
    let seed = rand::Rng::random(rng);
    Ok(lanczos_topk(op, p, k, max_iter, seed)?.pairs)
}

/// Splits the exemplar budget evenly over all (task, class) groups, trims
/// old groups to the new share and fills the new task's groups by herding
/// (or uniform sampling) on task-end features.
fn update_exemplars(
    state: &mut LearnerState,
    config: &LearnerConfig,
    task: &TaskDataset,
    model: &MlpModel,
    theta: &ParamVector,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let train = &task.train;
    let labels = train
        .labels()
        .ok_or_else(|| Error::InvalidArgument("exemplar selection needs class labels".into()))?;
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let groups = state.exemplars.len() + classes.len();
    let share = if groups == 0 { 0 } else { config.buffer_size / groups };
    for g in &mut state.exemplars {
        g.inputs.truncate(share);
    }
    for c in classes {
        let members: Vec<usize> = (0..train.len()).filter(|&i| labels[i] == c).collect();
        let picked: Vec<usize> = match config.buffer_selection {
            BufferSelection::Herding => {
                let feats = members
                    .iter()
                    .map(|&i| model.features(theta, train.input(i)))
                    .collect::<Result<Vec<_>>>()?;
                herding_select(&feats, share).into_iter().map(|j| members[j]).collect()
            }
            BufferSelection::Random => {
                let take = share.min(members.len());
                sample(rng, members.len(), take).into_iter().map(|j| members[j]).collect()
            }
        };
        state.exemplars.push(ExemplarGroup {
            task_id: task.task_id,
            class: c,
            inputs: picked.iter().map(|&i| train.input(i).to_vec()).collect(),
        });
    }
    let mut buffer = ReplayBuffer::new(config.buffer_size);
    for g in &state.exemplars {
        for x in &g.inputs {
            buffer.items.push(ReplayItem {
                input: x.clone(),
                label: g.class,
                task_id: g.task_id,
            });
        }
    }
    buffer.seen_count = state.buffer.seen_count + train.len();
    state.buffer = buffer;
    Ok(())
}
