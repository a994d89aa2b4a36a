use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{load_cell, CellStatus, Manifest};
use super::runlog::{atomic_write, RunLog};
use crate::algorithms::Locality;
use crate::analysis::forgetting_from_tables;
use crate::error::{Error, Result};

/// Seed aggregate for one (learner, lr) pair. Standard deviations are
/// population deviations over the completed seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub learner: String,
    pub algorithm: String,
    pub locality: Locality,
    pub lr: f64,
    pub seeds: usize,
    pub aborted: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub acc_forgetting_mean: f64,
    pub acc_forgetting_std: f64,
    pub loss_forgetting_mean: f64,
    pub loss_forgetting_std: f64,
}

/// Direction of final accuracy forgetting `E^acc(T)` across the
/// learning-rate grid.
///
/// `low` averages the two smallest learning rates and `high` the two largest
/// (one each when the grid has fewer than four values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub learner: String,
    pub locality: Locality,
    pub low_lr_forgetting: f64,
    pub high_lr_forgetting: f64,
    pub low_minus_high: f64,
    /// -1, 0 or 1.
    pub sign: i8,
    /// -1 for local learners, empty for global ones.
    pub expected_sign: Option<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceAggregate {
    pub learner: String,
    pub lr: f64,
    pub t: usize,
    pub seeds: usize,
    pub from_init_mean: f64,
    pub from_init_std: f64,
    pub update_norm_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub trends: Vec<TrendRow>,
    pub distances: Vec<DistanceAggregate>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn read_log(dir: &Path) -> Result<RunLog> {
    let path = dir.join("runlog.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

#[derive(Default)]
struct Group {
    algorithm: String,
    locality: Option<Locality>,
    aborted: usize,
    acc: Vec<f64>,
    acc_forgetting: Vec<f64>,
    loss_forgetting: Vec<f64>,
    distances: Vec<Vec<f64>>,
    update_norms: Vec<Vec<f64>>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

/// Low-minus-high trend of per-lr means, `lrs` sorted ascending.
pub fn trend(values: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let k = if n >= 4 { 2 } else { 1 };
    let low = values[..k].iter().map(|v| v.1).sum::<f64>() / k as f64;
    let high = values[n - k..].iter().map(|v| v.1).sum::<f64>() / k as f64;
    Some((low, high))
}

/// Aggregates a sweep directory into `report.csv`, `report.txt`,
/// `trend.csv`, `distances.csv` and, when cells carry
/// `analysis_perturbation.csv`, `perturbation.csv`. Output depends only on
/// the stored cells, so repeated calls are byte-identical.
pub fn report(dir: &Path) -> Result<Report> {
    let manifest = Manifest::load(dir)?;
    if manifest.cells.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: manifest lists no cells", dir.display())));
    }
    let mut order: Vec<String> = Vec::new();
    // (learner, lr bits) -> group; lr keyed by bit pattern for a total order
    let mut groups: BTreeMap<(usize, u64), Group> = BTreeMap::new();
    let mut lrs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut perturbation = Vec::new();
    let mut perturbation_header: Option<csv::StringRecord> = None;

    for cell in &manifest.cells {
        let li = match order.iter().position(|l| *l == cell.learner) {
            Some(i) => i,
            None => {
                order.push(cell.learner.clone());
                order.len() - 1
            }
        };
        let entry = lrs.entry(li).or_default();
        if !entry.iter().any(|x| x.to_bits() == cell.lr.to_bits()) {
            entry.push(cell.lr);
        }
        let g = groups.entry((li, cell.lr.to_bits())).or_default();
        g.algorithm = cell.algorithm.clone();
        let cdir = dir.join(&cell.dir);
        if g.locality.is_none() {
            if let Ok(spec) = load_cell(&cdir) {
                g.locality = Some(spec.learner.locality());
            }
        }
        if cell.status != CellStatus::Ok {
            g.aborted += 1;
            continue;
        }
        let log = read_log(&cdir)?;
        let f = forgetting_from_tables(&log.test_loss, &log.test_acc, log.task_count)?;
        g.acc.push(*f.average_accuracy.last().unwrap_or(&f64::NAN));
        g.acc_forgetting.push(*f.average_acc_forgetting.last().unwrap_or(&f64::NAN));
        g.loss_forgetting.push(*f.average_forgetting.last().unwrap_or(&f64::NAN));
        g.distances.push(log.distances.clone());
        g.update_norms.push(log.update_norms.clone());

        let ppath = cdir.join("analysis_perturbation.csv");
        if ppath.exists() {
            let mut r = csv::Reader::from_path(&ppath)?;
            if perturbation_header.is_none() {
                let mut h = csv::StringRecord::from(vec!["learner", "lr", "seed"]);
                h.extend(r.headers()?.iter());
                perturbation_header = Some(h);
            }
            for rec in r.records() {
                let rec = rec?;
                let mut row = csv::StringRecord::from(vec![cell.learner.clone(), cell.lr.to_string(), cell.seed.to_string()]);
                row.extend(rec.iter());
                perturbation.push(row);
            }
        }
    }

    let mut rows = Vec::new();
    let mut distances = Vec::new();
    let mut trends = Vec::new();
    for (li, learner) in order.iter().enumerate() {
        let mut grid = lrs.get(&li).cloned().unwrap_or_default();
        grid.sort_by(f64::total_cmp);
        let mut per_lr = Vec::new();
        let mut locality = Locality::Global;
        for &lr in &grid {
            let g = &groups[&(li, lr.to_bits())];
            locality = g.locality.unwrap_or(locality);
            let (acc_mean, acc_std) = mean_std(&g.acc);
            let (af_mean, af_std) = mean_std(&g.acc_forgetting);
            let (lf_mean, lf_std) = mean_std(&g.loss_forgetting);
            rows.push(ReportRow {
                learner: learner.clone(),
                algorithm: g.algorithm.clone(),
                locality,
                lr,
                seeds: g.acc.len(),
                aborted: g.aborted,
                acc_mean,
                acc_std,
                acc_forgetting_mean: af_mean,
                acc_forgetting_std: af_std,
                loss_forgetting_mean: lf_mean,
                loss_forgetting_std: lf_std,
            });
            if !g.acc.is_empty() {
                per_lr.push((lr, af_mean));
            }
            let steps = g.distances.iter().map(Vec::len).min().unwrap_or(0);
            for t in 0..steps {
                let d: Vec<f64> = g.distances.iter().map(|v| v[t]).collect();
                let u: Vec<f64> = g
                    .update_norms
                    .iter()
                    .map(|v| if t == 0 { 0.0 } else { v.get(t - 1).copied().unwrap_or(f64::NAN) })
                    .collect();
                let (m, s) = mean_std(&d);
                distances.push(DistanceAggregate {
                    learner: learner.clone(),
                    lr,
                    t,
                    seeds: d.len(),
                    from_init_mean: m,
                    from_init_std: s,
                    update_norm_mean: mean_std(&u).0,
                });
            }
        }
        if let Some((low, high)) = trend(&per_lr) {
            let diff = low - high;
            trends.push(TrendRow {
                learner: learner.clone(),
                locality,
                low_lr_forgetting: low,
                high_lr_forgetting: high,
                low_minus_high: diff,
                sign: if diff > 0.0 {
                    1
                } else if diff < 0.0 {
                    -1
                } else {
                    0
                },
                expected_sign: (locality == Locality::Local).then_some(-1),
            });
        }
    }

    write_csv(&dir.join("report.csv"), &rows)?;
    write_csv(&dir.join("trend.csv"), &trends)?;
    write_csv(&dir.join("distances.csv"), &distances)?;
    if let Some(h) = perturbation_header {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&h)?;
        for r in &perturbation {
            w.write_record(r)?;
        }
        let path = dir.join("perturbation.csv");
        let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        atomic_write(&path, &bytes)?;
    }
    atomic_write(&dir.join("report.txt"), render_text(&manifest.name, &rows, &trends).as_bytes())?;
    Ok(Report { rows, trends, distances })
}

fn render_text(name: &str, rows: &[ReportRow], trends: &[TrendRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {name}");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<22} {:>8} {:>6} {:>18} {:>18} {:>18}",
        "learner", "lr", "seeds", "ACC(T)", "E_acc(T)", "E(T)"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<22} {:>8} {:>6} {:>8.4} ± {:<7.4} {:>8.4} ± {:<7.4} {:>8.4} ± {:<7.4}",
            r.learner,
            r.lr,
            r.seeds,
            r.acc_mean,
            r.acc_std,
            r.acc_forgetting_mean,
            r.acc_forgetting_std,
            r.loss_forgetting_mean,
            r.loss_forgetting_std
        );
    }
    if !trends.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<22} {:>8} {:>12} {:>12} {:>5}", "learner", "locality", "Eacc(low)", "Eacc(high)", "sign");
        for t in trends {
            let loc = match t.locality {
                Locality::Local => "local",
                Locality::Global => "global",
            };
            let _ = writeln!(
                s,
                "{:<22} {:>8} {:>12.5} {:>12.5} {:>5}",
                t.learner, loc, t.low_lr_forgetting, t.high_lr_forgetting, t.sign
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn trend_uses_two_per_side_from_four() {
        let v = [(1e-3, 4.0), (1e-2, 2.0), (1e-1, 1.0), (1.0, 3.0), (2.0, 0.0)];
        let (lo, hi) = trend(&v).unwrap();
        assert_eq!(lo, 3.0);
        assert_eq!(hi, 1.5);
        let (lo, hi) = trend(&v[..3]).unwrap();
        assert_eq!((lo, hi), (4.0, 1.0));
        assert!(trend(&v[..1]).is_none());
    }
}
