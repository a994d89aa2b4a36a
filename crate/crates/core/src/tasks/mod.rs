//! Task sequences: synthetic classification streams, explicit quadratic
//! tasks, and IDX ingestion.

mod blobs;
pub mod idx;
mod quadratic;
mod sequences;

use serde::{Deserialize, Serialize};

use crate::numerics::Batch;

pub use blobs::synth_blobs;
pub use idx::{idx_to_batch, load_idx, parse_idx, IdxTensor};
pub use quadratic::{make_quadratic_sequence, QuadraticTaskSpec};
pub use sequences::{
    make_rotated_sequence, make_rotated_sequence_with_angles, make_split_sequence, rotate_batch,
    rotate_image_bilinear, split_train_test, train_test_split_seeded, RotationMode,
};

/// Incremental-learning flavour of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    DomainIl,
    TaskIl,
    ClassIl,
}

/// How accuracy is scored on a task's test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Argmax over every output.
    AllClasses,
    /// Argmax over the classes introduced so far.
    SeenClasses,
    /// Argmax restricted to the task's own classes.
    TaskClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    /// 1-based position in the sequence.
    pub task_id: usize,
    pub train: Batch,
    pub test: Batch,
    /// Global class ids present in this task.
    pub classes: Vec<usize>,
    pub setting: Setting,
    pub eval_mode: EvalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSequence {
    pub tasks: Vec<TaskDataset>,
}

impl TaskSequence {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Classes of tasks `1..=t`, sorted and deduplicated.
    pub fn classes_seen(&self, t: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.tasks[..t.min(self.len())]
            .iter()
            .flat_map(|task| task.classes.iter().copied())
            .collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Class restriction for scoring task `task` (0-based) after `t` tasks.
    pub fn eval_classes(&self, task: usize, t: usize) -> Option<Vec<usize>> {
        match self.tasks[task].eval_mode {
            EvalMode::AllClasses => None,
            EvalMode::SeenClasses => Some(self.classes_seen(t.max(task + 1))),
            EvalMode::TaskClasses => Some(self.tasks[task].classes.clone()),
        }
    }
}
