use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalMode, Setting, TaskDataset, TaskSequence};
use crate::error::{Error, Result};
use crate::numerics::Batch;

/// Where a rotation acts on the input vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Rotate the coordinate pair `(i, j)`; other coordinates are untouched.
    Plane(usize, usize),
    /// Treat inputs as row-major `height × width` images and resample them
    /// bilinearly about the image centre, padding with zeros.
    Image { height: usize, width: usize },
}

impl RotationMode {
    fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            RotationMode::Plane(i, j) => {
                if i >= dim || j >= dim || i == j {
                    return Err(Error::InvalidArgument(format!(
                        "rotation plane ({i}, {j}) invalid for input dim {dim}"
                    )));
                }
            }
            RotationMode::Image { height, width } => {
                if height * width != dim {
                    return Err(Error::InvalidArgument(format!(
                        "image {height}x{width} does not match input dim {dim}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Copy of `batch` with every input rotated by `angle` radians.
pub fn rotate_batch(batch: &Batch, angle: f64, mode: RotationMode) -> Result<Batch> {
    mode.validate(batch.dim())?;
    let mut out = batch.clone();
    match mode {
        RotationMode::Plane(i, j) => {
            let (s, c) = angle.sin_cos();
            out.map_inputs(|x| {
                let (a, b) = (x[i], x[j]);
                x[i] = c * a - s * b;
                x[j] = s * a + c * b;
            });
        }
        RotationMode::Image { height, width } => {
            out.map_inputs(|x| {
                let rotated = rotate_image_bilinear(x, height, width, angle);
                x.copy_from_slice(&rotated);
            });
        }
    }
    Ok(out)
}

/// Rotates a row-major image counter-clockwise about its centre.
pub fn rotate_image_bilinear(img: &[f64], height: usize, width: usize, angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let at = |r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= height as isize || col >= width as isize {
            0.0
        } else {
            img[r as usize * width + col as usize]
        }
    };
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for col in 0..width {
            // inverse map: rotate the destination point by -angle
            let dy = r as f64 - cy;
            let dx = col as f64 - cx;
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            out[r * width + col] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
                + fy * ((1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
        }
    }
    out
}

/// Deterministic 5:1 split: within each class, every sixth sample (index
/// 5, 11, …) goes to the test set. Regression batches split by row index.
pub fn split_train_test(batch: &Batch) -> (Batch, Batch) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    match batch.labels() {
        Some(labels) => {
            let mut seen = std::collections::BTreeMap::<usize, usize>::new();
            for (i, &y) in labels.iter().enumerate() {
                let k = seen.entry(y).or_insert(0);
                if *k % 6 == 5 {
                    test.push(i);
                } else {
                    train.push(i);
                }
                *k += 1;
            }
        }
        None => {
            for i in 0..batch.len() {
                if i % 6 == 5 {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
        }
    }
    (batch.select(&train), batch.select(&test))
}

/// Seeded 5:1 split: a random sixth of the rows (at least one) is held out.
pub fn train_test_split_seeded(batch: &Batch, seed: u64) -> Result<(Batch, Batch)> {
    if batch.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two samples to split".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..batch.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (batch.len() / 6).max(1);
    let (test, train) = idx.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((batch.select(&train), batch.select(&test)))
}

fn distinct_labels(batch: &Batch) -> Result<Vec<usize>> {
    let labels = batch
        .labels()
        .ok_or_else(|| Error::InvalidArgument("task sequences need class labels".into()))?;
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    Ok(c)
}

fn task_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64 + 1)
}

/// Domain-incremental stream: task `t` sees every base input rotated by its
/// own angle, drawn i.i.d. uniform on `angle_range`.
pub fn make_rotated_sequence(
    base: &Batch,
    tasks: usize,
    angle_range: (f64, f64),
    mode: RotationMode,
    seed: u64,
) -> Result<TaskSequence> {
    let (lo, hi) = angle_range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "bad angle range [{lo}, {hi})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..tasks)
        .map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo })
        .collect();
    make_rotated_sequence_with_angles(base, &angles, mode, seed)
}

/// Rotated stream with explicitly chosen angles.
pub fn make_rotated_sequence_with_angles(
    base: &Batch,
    angles: &[f64],
    mode: RotationMode,
    seed: u64,
) -> Result<TaskSequence> {
    if base.dim() < 2 {
        return Err(Error::InvalidArgument("rotation needs input dim >= 2".into()));
    }
    mode.validate(base.dim())?;
    let classes = distinct_labels(base)?;
    let tasks = angles
        .iter()
        .enumerate()
        .map(|(t, &angle)| {
            let rotated = rotate_batch(base, angle, mode)?;
            let (train, test) = train_test_split_seeded(&rotated, task_seed(seed, t))?;
            Ok(TaskDataset {
                task_id: t + 1,
                train,
                test,
                classes: classes.clone(),
                setting: Setting::DomainIl,
                eval_mode: EvalMode::AllClasses,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSequence { tasks })
}

/// Class-incremental stream: task `t` holds the `t`-th slice of
/// `classes_per_task` classes (in ascending class-id order).
pub fn make_split_sequence(base: &Batch, tasks: usize, classes_per_task: usize) -> Result<TaskSequence> {
    let classes = distinct_labels(base)?;
    if tasks == 0 || classes_per_task == 0 || tasks * classes_per_task > classes.len() {
        return Err(Error::InvalidArgument(format!(
            "{tasks} tasks x {classes_per_task} classes needs more than the {} classes available",
            classes.len()
        )));
    }
    let (train, test) = split_train_test(base);
    let pick = |b: &Batch, set: &[usize]| -> Batch {
        let labels = b.labels().expect("classification batch");
        let idx: Vec<usize> = (0..b.len()).filter(|&i| set.contains(&labels[i])).collect();
        b.select(&idx)
    };
    let tasks = (0..tasks)
        .map(|t| {
            let slice = classes[t * classes_per_task..(t + 1) * classes_per_task].to_vec();
            let task = TaskDataset {
                task_id: t + 1,
                train: pick(&train, &slice),
                test: pick(&test, &slice),
                classes: slice,
                setting: Setting::ClassIl,
                eval_mode: EvalMode::SeenClasses,
            };
            if task.train.is_empty() || task.test.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "task {} has an empty train or test split",
                    t + 1
                )));
            }
            Ok(task)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSequence { tasks })
}

impl TaskSequence {
    /// Same tasks, scored task-incrementally (argmax within each task's classes).
    pub fn as_task_incremental(mut self) -> Self {
        for t in &mut self.tasks {
            t.setting = Setting::TaskIl;
            t.eval_mode = EvalMode::TaskClasses;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::synth_blobs;
    use std::f64::consts::PI;

    #[test]
    fn zero_angle_task_equals_base_inputs() {
        let base = synth_blobs(12, 2, 3, 2.0, 1).unwrap();
        let seq = make_rotated_sequence(&base, 1, (0.0, 0.0), RotationMode::Plane(0, 1), 5).unwrap();
        let t = &seq.tasks[0];
        let whole = t.train.concat(&t.test).unwrap();
        assert_eq!(whole.len(), base.len());
        let rotated = rotate_batch(&base, 0.0, RotationMode::Plane(0, 1)).unwrap();
        assert_eq!(rotated, base);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let base = synth_blobs(5, 3, 4, 1.5, 2).unwrap();
        let mode = RotationMode::Plane(0, 1);
        let twice = rotate_batch(&rotate_batch(&base, PI / 2.0, mode).unwrap(), PI / 2.0, mode).unwrap();
        let once = rotate_batch(&base, PI, mode).unwrap();
        for (a, b) in twice.inputs().iter().zip(once.inputs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_preserves_norms() {
        let base = synth_blobs(10, 3, 5, 3.0, 3).unwrap();
        let r = rotate_batch(&base, 1.234, RotationMode::Plane(2, 4)).unwrap();
        for i in 0..base.len() {
            let a = crate::numerics::norm(base.input(i));
            let b = crate::numerics::norm(r.input(i));
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_plane_rejected() {
        let base = synth_blobs(3, 2, 3, 1.0, 0).unwrap();
        assert!(rotate_batch(&base, 0.1, RotationMode::Plane(0, 3)).is_err());
        assert!(rotate_batch(&base, 0.1, RotationMode::Plane(1, 1)).is_err());
        assert!(make_rotated_sequence(&base, 2, (0.0, PI), RotationMode::Plane(0, 9), 0).is_err());
    }

    #[test]
    fn image_rotation_half_turn_flips_pixels() {
        // 3x3 image, rotation by pi maps (r, c) to (2-r, 2-c)
        let img: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let out = rotate_image_bilinear(&img, 3, 3, PI);
        for r in 0..3 {
            for c in 0..3 {
                assert!((out[r * 3 + c] - img[(2 - r) * 3 + (2 - c)]).abs() < 1e-9);
            }
        }
        let same = rotate_image_bilinear(&img, 3, 3, 0.0);
        assert_eq!(same, img);
    }

    #[test]
    fn split_third_task_holds_classes_four_and_five() {
        let base = synth_blobs(12, 10, 4, 3.0, 9).unwrap();
        let seq = make_split_sequence(&base, 5, 2).unwrap();
        assert_eq!(seq.tasks[2].classes, vec![4, 5]);
        assert!(seq.tasks[2].train.labels().unwrap().iter().all(|y| [4, 5].contains(y)));
        assert_eq!(seq.tasks[2].setting, Setting::ClassIl);
    }

    #[test]
    fn split_single_task_is_whole_base() {
        let base = synth_blobs(12, 2, 3, 3.0, 9).unwrap();
        let seq = make_split_sequence(&base, 1, 2).unwrap();
        let (train, test) = split_train_test(&base);
        assert_eq!(seq.tasks[0].train, train);
        assert_eq!(seq.tasks[0].test, test);
    }

    #[test]
    fn split_tasks_partition_the_base_train_set() {
        let base = synth_blobs(12, 6, 3, 3.0, 4).unwrap();
        let seq = make_split_sequence(&base, 3, 2).unwrap();
        let (train, _) = split_train_test(&base);
        let total: usize = seq.tasks.iter().map(|t| t.train.len()).sum();
        assert_eq!(total, train.len());
        let mut rows: Vec<Vec<u64>> = seq
            .tasks
            .iter()
            .flat_map(|t| (0..t.train.len()).map(move |i| t.train.input(i).iter().map(|v| v.to_bits()).collect()))
            .collect();
        let mut base_rows: Vec<Vec<u64>> = (0..train.len())
            .map(|i| train.input(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        base_rows.sort();
        assert_eq!(rows, base_rows);
    }

    #[test]
    fn split_insufficient_classes() {
        let base = synth_blobs(6, 4, 3, 3.0, 4).unwrap();
        assert!(make_split_sequence(&base, 3, 2).is_err());
    }

    #[test]
    fn task_incremental_view_restricts_scoring() {
        let base = synth_blobs(12, 4, 3, 3.0, 4).unwrap();
        let seq = make_split_sequence(&base, 2, 2).unwrap();
        assert_eq!(seq.eval_classes(0, 2), Some(vec![0, 1, 2, 3]));
        let til = seq.as_task_incremental();
        assert_eq!(til.eval_classes(1, 2), Some(vec![2, 3]));
    }
}
