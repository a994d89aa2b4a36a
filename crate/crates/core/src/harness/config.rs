use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::LearnerConfig;
use crate::error::{Error, Result};
use crate::numerics::{Activation, LossKind, MlpModel};
use crate::tasks::{
    idx_to_batch, load_idx, make_rotated_sequence, make_split_sequence, synth_blobs, RotationMode, TaskSequence,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the directory that relative output paths are
/// resolved against.
pub const OUTPUT_ROOT_ENV: &str = "CLAB_OUTPUT_ROOT";

/// Learning rates of the locality sweep.
pub const PAPER_LR_GRID: [f64; 6] = [1e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1];

pub const PAPER_SEEDS: [u64; 5] = [11, 13, 33, 21, 55];

fn default_pi() -> f64 {
    std::f64::consts::PI
}
fn default_plane() -> [usize; 2] {
    [0, 1]
}

/// How the task stream is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// Domain-incremental: Gaussian blobs rotated in one input plane.
    RotatedBlobs {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        tasks: usize,
        #[serde(default)]
        angle_lo: f64,
        #[serde(default = "default_pi")]
        angle_hi: f64,
        #[serde(default = "default_plane")]
        plane: [usize; 2],
        #[serde(default)]
        data_seed: u64,
    },
    /// Class-incremental (or task-incremental) split of Gaussian blobs.
    SplitBlobs {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        tasks: usize,
        classes_per_task: usize,
        #[serde(default)]
        task_incremental: bool,
        #[serde(default)]
        data_seed: u64,
    },
    /// Rotated images from local IDX files (e.g. MNIST).
    RotatedIdx {
        images: PathBuf,
        labels: PathBuf,
        tasks: usize,
        /// Keep only the first `limit` images.
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        data_seed: u64,
    },
}

impl SequenceSpec {
    pub fn build(&self) -> Result<TaskSequence> {
        match self {
            SequenceSpec::RotatedBlobs {
                n_per_class,
                classes,
                dim,
                separation,
                tasks,
                angle_lo,
                angle_hi,
                plane,
                data_seed,
            } => {
                let base = synth_blobs(*n_per_class, *classes, *dim, *separation, *data_seed)?;
                make_rotated_sequence(
                    &base,
                    *tasks,
                    (*angle_lo, *angle_hi),
                    RotationMode::Plane(plane[0], plane[1]),
                    *data_seed,
                )
            }
            SequenceSpec::SplitBlobs {
                n_per_class,
                classes,
                dim,
                separation,
                tasks,
                classes_per_task,
                task_incremental,
                data_seed,
            } => {
                let base = synth_blobs(*n_per_class, *classes, *dim, *separation, *data_seed)?;
                let seq = make_split_sequence(&base, *tasks, *classes_per_task)?;
                Ok(if *task_incremental { seq.as_task_incremental() } else { seq })
            }
            SequenceSpec::RotatedIdx {
                images,
                labels,
                tasks,
                limit,
                data_seed,
            } => {
                let imgs = load_idx(images)?;
                let labs = load_idx(labels)?;
                if imgs.dims.len() != 3 {
                    return Err(Error::Config(format!("expected a 3-D image tensor, got dims {:?}", imgs.dims)));
                }
                let (h, w) = (imgs.dims[1], imgs.dims[2]);
                let mut base = idx_to_batch(&imgs, &labs)?;
                if let Some(n) = limit {
                    let keep: Vec<usize> = (0..base.len().min(*n)).collect();
                    base = base.select(&keep);
                }
                make_rotated_sequence(
                    &base,
                    *tasks,
                    (0.0, std::f64::consts::PI),
                    RotationMode::Image { height: h, width: w },
                    *data_seed,
                )
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let tasks = match self {
            SequenceSpec::RotatedBlobs { tasks, plane, dim, .. } => {
                if plane[0] == plane[1] || plane[0] >= *dim || plane[1] >= *dim {
                    return Err(Error::Config(format!("rotation plane {plane:?} invalid for dim {dim}")));
                }
                *tasks
            }
            SequenceSpec::SplitBlobs { tasks, .. } | SequenceSpec::RotatedIdx { tasks, .. } => *tasks,
        };
        if tasks == 0 {
            return Err(Error::Config("a sequence needs at least one task".into()));
        }
        Ok(())
    }
}

fn default_hidden() -> Vec<usize> {
    vec![100, 100]
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

/// MLP shape; input and output widths come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            hidden: default_hidden(),
            activation: default_activation(),
            loss: default_loss(),
        }
    }
}

impl ModelSpec {
    pub fn build(&self, input_dim: usize, output_dim: usize) -> Result<MlpModel> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend(&self.hidden);
        sizes.push(output_dim);
        MlpModel::new(sizes, self.activation, self.loss)
    }

    /// Model sized for `seq`: one output per class id up to the largest seen.
    pub fn build_for(&self, seq: &TaskSequence) -> Result<MlpModel> {
        let first = seq
            .tasks
            .first()
            .ok_or_else(|| Error::Config("empty task sequence".into()))?;
        let outputs = seq
            .tasks
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .max()
            .map_or(1, |c| c + 1);
        self.build(first.train.dim(), outputs)
    }
}

fn yes() -> bool {
    true
}
fn default_top_k() -> usize {
    10
}
fn default_n_random() -> usize {
    16
}
fn default_subsample() -> Option<usize> {
    Some(2000)
}
fn default_thresholds() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1]
}

/// Which post-hoc analyses `sweep` runs on each cell, and their sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisToggles {
    #[serde(default)]
    pub spectrum: bool,
    #[serde(default)]
    pub perturbation: bool,
    #[serde(default = "yes")]
    pub distances: bool,
    #[serde(default)]
    pub theorem_checks: bool,
    /// Eigenpairs per checkpoint.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Eigen-directions probed by the perturbation score.
    #[serde(default = "default_top_k")]
    pub perturbation_directions: usize,
    #[serde(default = "default_n_random")]
    pub n_random: usize,
    /// Inputs per Hessian estimate; `null` uses the whole training set.
    #[serde(default = "default_subsample")]
    pub hessian_samples: Option<usize>,
    /// Relative thresholds for effective rank.
    #[serde(default = "default_thresholds")]
    pub rank_thresholds: Vec<f64>,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_name() -> String {
    "experiment".into()
}
fn default_lr_grid() -> Vec<f64> {
    PAPER_LR_GRID.to_vec()
}
fn default_seeds() -> Vec<u64> {
    PAPER_SEEDS.to_vec()
}

/// A sweep: every learner × learning rate × seed.
///
/// Per cell, the seed drives parameter initialization and the learner's
/// stream; the data depend only on the sequence's `data_seed`. The cell's
/// learning rate replaces each learner's own `lr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub model: ModelSpec,
    pub learners: Vec<LearnerConfig>,
    #[serde(default = "default_lr_grid")]
    pub lr_grid: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Relative paths resolve against `$CLAB_OUTPUT_ROOT` (else the working
    /// directory); absent means `<root>/<name>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub analysis: AnalysisToggles,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.lr_grid.is_empty() {
            return Err(Error::Config("lr_grid is empty".into()));
        }
        if let Some(lr) = self.lr_grid.iter().find(|&&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config(format!("learning rate {lr} is not positive")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::Config("no learners configured".into()));
        }
        let mut labels = HashSet::new();
        for l in &self.learners {
            l.validate()?;
            if !labels.insert(l.label()) {
                return Err(Error::Config(format!("duplicate learner label {:?}", l.label())));
            }
        }
        if self.model.hidden.is_empty() || self.model.hidden.contains(&0) {
            return Err(Error::Config("model.hidden needs at least one nonzero layer".into()));
        }
        self.sequence.validate()
    }

    /// Resolved output directory.
    pub fn output_path(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
        match &self.output_dir {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => root.join(p),
            None => root.join(&self.name),
        }
    }

    /// Hex SHA-256 over the canonical JSON of the cell's inputs.
    pub fn cell_hash(&self, learner: &LearnerConfig, lr: f64, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.sequence).expect("serializable"));
        h.update(serde_json::to_vec(&self.model).expect("serializable"));
        h.update(serde_json::to_vec(learner).expect("serializable"));
        h.update(lr.to_bits().to_le_bytes());
        h.update(seed.to_le_bytes());
        hex::encode(h.finalize())
    }
}

/// Everything needed to reproduce one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub sequence: SequenceSpec,
    pub model: ModelSpec,
    /// Learner with the cell's `lr` and `seed` filled in.
    pub learner: LearnerConfig,
    pub lr: f64,
    pub seed: u64,
}

impl CellSpec {
    pub fn new(config: &ExperimentConfig, learner: &LearnerConfig, lr: f64, seed: u64) -> Self {
        CellSpec {
            sequence: config.sequence.clone(),
            model: config.model.clone(),
            learner: LearnerConfig {
                lr,
                seed,
                ..learner.clone()
            },
            lr,
            seed,
        }
    }

    /// Directory name, e.g. `ewc_lr0.001_seed11`.
    pub fn dir_name(&self) -> String {
        format!("{}_lr{}_seed{}", self.learner.label(), self.lr, self.seed)
    }
}
