use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, MemorySummary};
use crate::error::{Error, Result};
use crate::numerics::ParamVector;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLAB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Training abort recorded in a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAbort {
    /// 1-based task during which training stopped.
    pub task: usize,
    pub step: usize,
    pub reason: String,
}

/// Everything recorded for one (config, lr, seed) cell.
///
/// Metric tables are indexed `[checkpoint][task]`: row `c` holds the test
/// metrics of every task at `θ_c`, row 0 being the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config_hash: String,
    /// Learner label (see `LearnerConfig::label`).
    pub learner: String,
    pub algorithm: Algorithm,
    pub lr: f64,
    pub seed: u64,
    pub task_count: usize,
    /// `θ_0..θ_T`; stored on disk as separate checkpoint files.
    #[serde(skip)]
    pub checkpoints: Vec<ParamVector>,
    pub test_loss: Vec<Vec<f64>>,
    pub test_acc: Vec<Vec<f64>>,
    /// `‖Δ_t‖` for `t = 1..T`.
    pub update_norms: Vec<f64>,
    /// `‖θ_t − θ_0‖` for `t = 0..T`.
    pub distances: Vec<f64>,
    /// Learner memory after each task.
    pub memory: Vec<MemorySummary>,
    /// Seconds spent per task. Not part of any CSV output.
    pub wall_seconds: Vec<f64>,
    pub aborted: Option<RunAbort>,
}

impl RunLog {
    /// Number of completed tasks.
    pub fn tasks_done(&self) -> usize {
        self.checkpoints.len().saturating_sub(1)
    }

    /// Test-metric columns in `metrics.csv` order.
    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        let mut rows = Vec::new();
        for (c, (losses, accs)) in self.test_loss.iter().zip(&self.test_acc).enumerate() {
            for (o, (l, a)) in losses.iter().zip(accs).enumerate() {
                rows.push(MetricsRow {
                    learner: self.learner.clone(),
                    algorithm: self.algorithm.name().to_string(),
                    lr: self.lr,
                    seed: self.seed,
                    checkpoint: c,
                    task: o + 1,
                    test_loss: *l,
                    test_acc: *a,
                    update_norm: if c == 0 { 0.0 } else { self.update_norms[c - 1] },
                    distance_from_init: self.distances[c],
                });
            }
        }
        rows
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub learner: String,
    pub algorithm: String,
    pub lr: f64,
    pub seed: u64,
    /// Index `c` of `θ_c` (0 = initialization).
    pub checkpoint: usize,
    /// 1-based task whose test set was scored.
    pub task: usize,
    pub test_loss: f64,
    pub test_acc: f64,
    /// `‖θ_c − θ_{c−1}‖`, 0 at `c = 0`.
    pub update_norm: f64,
    /// `‖θ_c − θ_0‖`.
    pub distance_from_init: f64,
}

/// Serializes parameters as `CLAB`, version (u32 LE), `P` (u64 LE), then `P`
/// little-endian f64 values.
pub fn encode_checkpoint(params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ParamVector> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 16 {
        return Err(bad(format!("{} bytes is shorter than the 16-byte header", bytes.len())));
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let p = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = p
        .checked_mul(8)
        .and_then(|b| b.checked_add(16))
        .ok_or_else(|| bad(format!("parameter count {p} overflows")))?;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for P = {p}, found {}", bytes.len())));
    }
    Ok(ParamVector::from_vec(
        bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

pub fn write_checkpoint(path: &Path, params: &[f64]) -> Result<()> {
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ParamVector> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

fn checkpoint_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("theta_{t:03}.bin"))
}

/// Writes `metrics.csv`, `runlog.json` and `checkpoints/theta_XXX.bin`.
/// Files are written under temporary names and renamed into place, with
/// `runlog.json` last, so a present `runlog.json` marks a complete cell.
pub fn save_run(dir: &Path, log: &RunLog) -> Result<()> {
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
    for (t, theta) in log.checkpoints.iter().enumerate() {
        write_checkpoint(&checkpoint_path(dir, t), theta)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in log.metrics_rows() {
        w.serialize(row)?;
    }
    let csv_bytes = w.into_inner().map_err(|e| Error::io(dir.join("metrics.csv"), e.into_error()))?;
    atomic_write(&dir.join("metrics.csv"), &csv_bytes)?;
    let json = serde_json::to_vec_pretty(log)?;
    atomic_write(&dir.join("runlog.json"), &json)
}

pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a cell written by [`save_run`], checkpoints included.
pub fn load_run(dir: &Path) -> Result<RunLog> {
    let path = dir.join("runlog.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut log: RunLog = serde_json::from_slice(&text)?;
    let count = log.distances.len();
    log.checkpoints = (0..count)
        .map(|t| read_checkpoint(&checkpoint_path(dir, t)))
        .collect::<Result<_>>()?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_header_layout() {
        let bytes = encode_checkpoint(&[1.5, -0.0]);
        assert_eq!(&bytes[..4], b"CLAB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 32);
        let back = decode_checkpoint(&bytes, Path::new("x")).unwrap();
        assert_eq!(back[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_truncation_and_magic() {
        let mut bytes = encode_checkpoint(&[1.0, 2.0]);
        bytes.pop();
        assert!(decode_checkpoint(&bytes, Path::new("x")).is_err());
        let mut bytes = encode_checkpoint(&[1.0]);
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes, Path::new("x")).is_err());
    }
}
