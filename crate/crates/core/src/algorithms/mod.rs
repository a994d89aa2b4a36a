//! Continual learners: one shared SGD loop with per-algorithm gradient hooks
//! and end-of-task memory updates.

mod agem;
mod ewc;
mod icarl;
mod learner;
mod nullspace;
mod ogd;
mod replay;
mod si;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agem::agem_project;
pub use ewc::{ewc_consolidate, ewc_penalty_grad, FisherState};
pub use icarl::{herding_select, ncm_classify, BufferSelection};
pub use learner::{train_task, AbortInfo, ExemplarGroup, LearnerState, MemorySummary, NullspaceMemory, StepLog, TaskOutcome};
pub use nullspace::{
    average_hessian, dense_eigenpairs, minimize_in_nullspace, nullspace_gd_step, run_quadratic_nullspace,
    NullspaceStep,
};
pub use ogd::{ogd_extend_basis, ogd_project, OgdBasis, OgdVariant};
pub use replay::{reservoir_extend, reservoir_insert, ReplayBuffer, ReplayItem};
pub use si::{si_accumulate, si_consolidate, SiState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Er,
    Agem,
    Ewc,
    Si,
    Ogd,
    OgdGtl,
    IcarlLite,
    NullspaceGd,
}

/// Whether a learner's surrogate for past losses is built from information
/// at the past solutions (local) or independently of them (global).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local,
    Global,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Sgd,
        Algorithm::Er,
        Algorithm::Agem,
        Algorithm::Ewc,
        Algorithm::Si,
        Algorithm::Ogd,
        Algorithm::OgdGtl,
        Algorithm::IcarlLite,
        Algorithm::NullspaceGd,
    ];

    pub fn locality(self) -> Locality {
        match self {
            Algorithm::Ewc | Algorithm::Ogd | Algorithm::OgdGtl | Algorithm::IcarlLite | Algorithm::NullspaceGd => {
                Locality::Local
            }
            Algorithm::Sgd | Algorithm::Er | Algorithm::Agem | Algorithm::Si => Locality::Global,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Er => "er",
            Algorithm::Agem => "agem",
            Algorithm::Ewc => "ewc",
            Algorithm::Si => "si",
            Algorithm::Ogd => "ogd",
            Algorithm::OgdGtl => "ogd_gtl",
            Algorithm::IcarlLite => "icarl_lite",
            Algorithm::NullspaceGd => "nullspace_gd",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    5
}
fn default_batch_size() -> usize {
    128
}
fn default_buffer_size() -> usize {
    500
}
fn default_ewc_lambda() -> f64 {
    0.7
}
fn one() -> f64 {
    1.0
}
fn default_ogd_samples() -> usize {
    200
}
fn default_seed() -> u64 {
    11
}
fn default_nullspace_rank() -> usize {
    10
}
fn default_nullspace_tol() -> f64 {
    1e-3
}
fn default_hessian_samples() -> usize {
    2000
}

/// Hyperparameters of one learner. Omitted JSON fields take the Rotated-MNIST
/// values (batch 128, 5 epochs, buffer 500, λ = 0.7, γ = 1, c = 1, ξ = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Row name in reports; see [`label`](Self::label).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Optional; when present it must agree with the algorithm's tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality_tag: Option<Locality>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_buffer_size")]
    pub buffer_size: usize,
    #[serde(default = "default_ewc_lambda")]
    pub ewc_lambda: f64,
    #[serde(default = "one")]
    pub ewc_gamma: f64,
    #[serde(default = "one")]
    pub si_c: f64,
    #[serde(default = "one")]
    pub si_xi: f64,
    #[serde(default = "default_ogd_samples")]
    pub ogd_samples_per_task: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// iCarl-lite exemplar selection.
    #[serde(default)]
    pub buffer_selection: BufferSelection,
    /// Inverted-dropout rate on hidden units.
    #[serde(default)]
    pub dropout: f64,
    /// Per-task multiplicative learning-rate decay; 1 disables it.
    #[serde(default = "one")]
    pub lr_decay: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Eigenpairs of the average Hessian kept by NullSpaceGD.
    #[serde(default = "default_nullspace_rank")]
    pub nullspace_rank: usize,
    /// Relative eigenvalue threshold for the NullSpaceGD projection.
    #[serde(default = "default_nullspace_tol")]
    pub nullspace_tol: f64,
    /// Inputs per task used for Hessian estimates.
    #[serde(default = "default_hessian_samples")]
    pub hessian_samples: usize,
}

impl LearnerConfig {
    /// Defaults for `algorithm`.
    pub fn new(algorithm: Algorithm) -> Self {
        LearnerConfig {
            algorithm,
            label: None,
            locality_tag: None,
            lr: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            buffer_size: default_buffer_size(),
            ewc_lambda: default_ewc_lambda(),
            ewc_gamma: 1.0,
            si_c: 1.0,
            si_xi: 1.0,
            ogd_samples_per_task: default_ogd_samples(),
            seed: default_seed(),
            buffer_selection: BufferSelection::Herding,
            dropout: 0.0,
            lr_decay: 1.0,
            weight_decay: 0.0,
            nullspace_rank: default_nullspace_rank(),
            nullspace_tol: default_nullspace_tol(),
            hessian_samples: default_hessian_samples(),
        }
    }

    /// Plastic SGD: no dropout, constant learning rate.
    pub fn plastic_sgd() -> Self {
        LearnerConfig::new(Algorithm::Sgd)
    }

    /// Stable SGD: small batches, dropout 0.5 and a per-task learning-rate
    /// decay of 0.8. Differs from [`plastic_sgd`](Self::plastic_sgd) only in
    /// `batch_size`, `dropout` and `lr_decay`.
    pub fn stable_sgd() -> Self {
        LearnerConfig {
            batch_size: 10,
            dropout: 0.5,
            lr_decay: 0.8,
            ..LearnerConfig::new(Algorithm::Sgd)
        }
    }

    pub fn locality(&self) -> Locality {
        self.algorithm.locality()
    }

    /// The explicit label, else the algorithm name (with `_random` appended
    /// for iCarl-lite with random exemplar selection).
    pub fn label(&self) -> String {
        match (&self.label, self.algorithm, self.buffer_selection) {
            (Some(l), _, _) => l.clone(),
            (None, Algorithm::IcarlLite, BufferSelection::Random) => "icarl_lite_random".into(),
            (None, a, _) => a.name().into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive and finite, got {}", self.lr));
        }
        if let Some(l) = &self.label {
            if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("label {l:?} must be non-empty ASCII letters, digits, '_' or '-'"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(tag) = self.locality_tag {
            if tag != self.algorithm.locality() {
                return bad(format!("{} is tagged {:?}, not {:?}", self.algorithm, self.algorithm.locality(), tag));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.si_xi > 0.0) {
            return bad(format!("si_xi must be positive, got {}", self.si_xi));
        }
        if !(self.lr_decay > 0.0) {
            return bad(format!("lr_decay must be positive, got {}", self.lr_decay));
        }
        for (name, v) in [
            ("ewc_lambda", self.ewc_lambda),
            ("ewc_gamma", self.ewc_gamma),
            ("si_c", self.si_c),
            ("weight_decay", self.weight_decay),
            ("nullspace_tol", self.nullspace_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        if self.algorithm == Algorithm::NullspaceGd && self.nullspace_rank == 0 {
            return bad("nullspace_rank must be at least 1".into());
        }
        Ok(())
    }
}
