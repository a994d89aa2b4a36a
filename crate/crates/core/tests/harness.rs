use std::fs;
use std::path::Path;
use std::process::Command;

use clab::algorithms::Algorithm;
use clab::harness::*;
use clab::numerics::ParamVector;
use proptest::prelude::*;

fn config_json(out: &Path, tasks: usize, lrs: &str, seeds: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "name": "tiny",
  "sequence": {{"generator": "rotated_blobs", "n_per_class": 20, "classes": 3, "dim": 4,
                "separation": 3.0, "tasks": {tasks}, "data_seed": 5}},
  "model": {{"hidden": [8]}},
  "learners": [
    {{"algorithm": "sgd", "epochs": 2, "batch_size": 16}},
    {{"algorithm": "ewc", "epochs": 2, "batch_size": 16}}
  ],
  "lr_grid": {lrs},
  "seeds": {seeds},
  "output_dir": {out:?}
}}"#
    )
}

fn tiny(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&config_json(out, 3, "[0.01, 0.1]", "[11, 13]")).unwrap()
}

#[test]
fn identical_cells_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = run_experiment(&tiny(a.path()), 0.05, 11).unwrap();
    let db = run_experiment(&tiny(b.path()), 0.05, 11).unwrap();
    assert_eq!(da.len(), 2);
    for (x, y) in da.iter().zip(&db) {
        assert_eq!(fs::read(x.join("metrics.csv")).unwrap(), fs::read(y.join("metrics.csv")).unwrap());
        for t in 0..=3 {
            let name = format!("checkpoints/theta_{t:03}.bin");
            assert_eq!(fs::read(x.join(&name)).unwrap(), fs::read(y.join(&name)).unwrap());
        }
    }
}

#[test]
fn run_log_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let cell = CellSpec::new(&cfg, &cfg.learners[1], 0.1, 13);
    let log = run_cell(&cell, "h").unwrap();
    save_run(dir.path(), &log).unwrap();
    let back = load_run(dir.path()).unwrap();
    assert_eq!(back, log);
    for (x, y) in back.checkpoints.iter().zip(&log.checkpoints) {
        assert!(x.iter().zip(y.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    assert_eq!(back.test_loss.len(), 4);
    assert!(back.test_loss.iter().all(|r| r.len() == 3));
}

#[test]
fn single_task_run_has_no_forgetting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(&config_json(dir.path(), 1, "[0.1]", "[11]")).unwrap();
    let cell = CellSpec::new(&cfg, &cfg.learners[0], 0.1, 11);
    let f = clab::analysis::compute_forgetting(&run_cell(&cell, "h").unwrap()).unwrap();
    assert_eq!(f.average_forgetting, vec![0.0]);
    assert_eq!(f.average_acc_forgetting, vec![0.0]);
}

#[test]
fn sweep_writes_cells_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.learners.truncate(1);
    let m = sweep(&cfg, 2).unwrap();
    assert_eq!(m.cells.len(), 4);
    assert!(m.cells.iter().all(|c| c.computed && c.status == CellStatus::Ok));
    for c in &m.cells {
        assert!(dir.path().join(&c.dir).join("runlog.json").exists());
        assert!(dir.path().join(&c.dir).join("analysis_distances.csv").exists());
    }
    let stored: Vec<String> = Manifest::load(dir.path()).unwrap().cells.into_iter().map(|c| c.dir).collect();
    assert_eq!(stored, m.cells.iter().map(|c| c.dir.clone()).collect::<Vec<_>>());
    let removed = &m.cells[2].dir;
    let before = fs::read(dir.path().join(&m.cells[0].dir).join("metrics.csv")).unwrap();
    fs::remove_dir_all(dir.path().join(removed)).unwrap();
    let again = sweep(&cfg, 2).unwrap();
    let computed: Vec<&str> = again.cells.iter().filter(|c| c.computed).map(|c| c.dir.as_str()).collect();
    assert_eq!(computed, vec![removed.as_str()]);
    assert_eq!(fs::read(dir.path().join(&m.cells[0].dir).join("metrics.csv")).unwrap(), before);
}

#[test]
fn changed_config_invalidates_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.learners.truncate(1);
    cfg.seeds = vec![11];
    cfg.lr_grid = vec![0.1];
    sweep(&cfg, 1).unwrap();
    cfg.learners[0].epochs = 3;
    let m = sweep(&cfg, 1).unwrap();
    assert!(m.cells[0].computed);
}

fn hand_log(acc: Vec<Vec<f64>>, loss: Vec<Vec<f64>>, seed: u64) -> RunLog {
    let rows = acc.len();
    RunLog {
        config_hash: "x".into(),
        learner: "ewc".into(),
        algorithm: Algorithm::Ewc,
        lr: 0.1,
        seed,
        task_count: rows - 1,
        checkpoints: vec![ParamVector::from_vec(vec![0.0]); rows],
        test_loss: loss,
        test_acc: acc,
        update_norms: vec![1.0; rows - 1],
        distances: (0..rows).map(|t| t as f64 * seed as f64).collect(),
        memory: vec![],
        wall_seconds: vec![],
        aborted: None,
    }
}

fn write_manifest(dir: &Path, logs: &[(RunLog, f64)]) {
    let mut cells = Vec::new();
    for (i, (log, lr)) in logs.iter().enumerate() {
        let mut log = log.clone();
        log.lr = *lr;
        let name = format!("cell{i}");
        save_run(&dir.join(&name), &log).unwrap();
        cells.push(ManifestEntry {
            learner: log.learner.clone(),
            algorithm: "ewc".into(),
            lr: *lr,
            seed: log.seed,
            dir: name,
            config_hash: "x".into(),
            status: CellStatus::Ok,
            error: None,
            computed: true,
        });
    }
    let m = Manifest { name: "hand".into(), cells };
    fs::write(dir.join("manifest.json"), serde_json::to_vec(&m).unwrap()).unwrap();
}

#[test]
fn report_matches_hand_summed_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let loss = vec![vec![1.0, 1.0]; 3];
    let a1 = vec![vec![0.0, 0.0], vec![0.9, 0.1], vec![0.6, 0.8]];
    let a2 = vec![vec![0.0, 0.0], vec![0.7, 0.2], vec![0.65, 0.9]];
    let a3 = vec![vec![0.0, 0.0], vec![0.8, 0.3], vec![0.2, 0.7]];
    write_manifest(
        dir.path(),
        &[
            (hand_log(a1, loss.clone(), 11), 0.001),
            (hand_log(a2, loss.clone(), 13), 0.001),
            (hand_log(a3, loss, 11), 0.1),
        ],
    );
    let r = report(dir.path()).unwrap();
    // ACC(2): 0.7 and 0.775; E_acc(2): (0.3 + 0)/2 = 0.15 and (0.05 + 0)/2 = 0.025
    let low = &r.rows[0];
    assert_eq!(low.seeds, 2);
    assert!((low.acc_mean - 0.7375).abs() < 1e-12);
    assert!((low.acc_std - 0.0375).abs() < 1e-12);
    assert!((low.acc_forgetting_mean - 0.0875).abs() < 1e-12);
    assert!((low.acc_forgetting_std - 0.0625).abs() < 1e-12);
    let high = &r.rows[1];
    assert_eq!(high.acc_std, 0.0);
    assert!((high.acc_forgetting_mean - 0.3).abs() < 1e-12);
    let t = &r.trends[0];
    assert!((t.low_minus_high - (0.0875 - 0.3)).abs() < 1e-12);
    assert_eq!(t.sign, -1);
    assert!(dir.path().join("report.txt").exists());
    assert!(dir.path().join("distances.csv").exists());
}

#[test]
fn report_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path());
    cfg.seeds = vec![11];
    sweep(&cfg, 2).unwrap();
    report(dir.path()).unwrap();
    let names = ["report.csv", "report.txt", "trend.csv", "distances.csv"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(dir.path().join(n)).unwrap()).collect();
    report(dir.path()).unwrap();
    for (n, bytes) in names.iter().zip(first) {
        assert_eq!(fs::read(dir.path().join(n)).unwrap(), bytes, "{n}");
    }
    let r = report(dir.path()).unwrap();
    assert_eq!(r.trends.len(), 2);
    let ewc = r.trends.iter().find(|t| t.learner == "ewc").unwrap();
    assert_eq!(ewc.expected_sign, Some(-1));
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(report(dir.path()).is_err());
    fs::write(dir.path().join("manifest.json"), r#"{"name": "e", "cells": []}"#).unwrap();
    assert!(report(dir.path()).is_err());
}

#[test]
fn analyze_writes_spectrum_and_distances() {
    let dir = tempfile::tempdir().unwrap();
    let cells = run_experiment(&tiny(dir.path()), 0.1, 11).unwrap();
    let toggles = AnalysisToggles {
        top_k: 3,
        perturbation_directions: 1,
        n_random: 2,
        hessian_samples: Some(30),
        ..AnalysisToggles::default()
    };
    for kind in AnalysisKind::ALL {
        analyze_checkpoint(&cells[0], kind, &toggles).unwrap();
        assert!(cells[0].join(format!("analysis_{kind}.csv")).exists());
    }
    match analyze_checkpoint(&cells[0], AnalysisKind::Spectrum, &toggles).unwrap() {
        AnalysisOutput::Spectrum { eigen, ranks } => {
            assert_eq!(eigen.len(), 9);
            assert_eq!(ranks.len(), 9);
        }
        other => panic!("unexpected {other:?}"),
    }
    fs::remove_file(cells[0].join("checkpoints/theta_002.bin")).unwrap();
    assert!(analyze_checkpoint(&cells[0], AnalysisKind::Distances, &toggles).is_err());
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ExperimentConfig::from_json(&config_json(dir.path(), 2, "[0.1]", "[11, 11]")).is_err());
    assert!(ExperimentConfig::from_json(&config_json(dir.path(), 2, "[]", "[11]")).is_err());
    let bad = config_json(dir.path(), 2, "[0.1]", "[11]").replace("\"name\"", "\"nmae\"");
    let err = ExperimentConfig::from_json(&bad).unwrap_err();
    assert!(err.is_validation());
    let cfg: ExperimentConfig =
        ExperimentConfig::from_json(&config_json(dir.path(), 2, "[0.1]", "[11]").replace("\"lr_grid\": [0.1],", "")).unwrap();
    assert_eq!(cfg.lr_grid, PAPER_LR_GRID.to_vec());
}

proptest! {
    #[test]
    fn checkpoint_preserves_bits(bits in prop::collection::vec(any::<u64>(), 0..64)) {
        let params: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_checkpoint(&path, &params).unwrap();
        let back = read_checkpoint(&path).unwrap();
        let back_bits: Vec<u64> = back.iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(back_bits, bits);
    }
}

fn clab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clab"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(clab().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(clab().arg("frobnicate").output().unwrap().status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, config_json(dir.path(), 2, "[0.1]", "[11, 11]")).unwrap();
    let out = clab().args(["sweep", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = clab().args(["report", "--dir"]).arg(dir.path().join("nowhere")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let good = dir.path().join("good.json");
    fs::write(&good, config_json(&dir.path().join("out"), 2, "[0.1]", "[11]")).unwrap();
    let out = clab().args(["run", "--config"]).arg(&good).args(["--lr", "0.05", "--seed", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = clab().args(["sweep", "--config"]).arg(&good).args(["--jobs", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = clab().args(["report", "--dir"]).arg(dir.path().join("out")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ewc"));
    let cell = dir.path().join("out").join("sgd_lr0.1_seed11");
    let out = clab().args(["analyze", "--run"]).arg(&cell).args(["--kind", "distances"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = clab().args(["analyze", "--run"]).arg(&cell).args(["--kind", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn output_root_env_resolves_relative_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    fs::write(&cfg_path, config_json(Path::new("rel"), 1, "[0.1]", "[11]")).unwrap();
    let out = clab()
        .env(OUTPUT_ROOT_ENV, dir.path())
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--lr", "0.1", "--seed", "11"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("rel/sgd_lr0.1_seed11/runlog.json").exists());
}
