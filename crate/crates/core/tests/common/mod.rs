//! Oracles shared by the integration tests. They use only `forward`,
//! `loss` and `loss_and_grad` from the library, plus closed-form softmax
//! derivatives.
#![allow(dead_code)]

use clab::numerics::{dot, norm, Batch, MlpModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> Batch {
    let inputs = (0..n * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::classification(dim, inputs, labels).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

pub fn fd_grad_direction(m: &MlpModel, p: &[f64], batch: &Batch, d: &[f64], eps: f64) -> Vec<f64> {
    let plus: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + eps * b).collect();
    let minus: Vec<f64> = p.iter().zip(d).map(|(a, b)| a - eps * b).collect();
    let (_, gp) = m.loss_and_grad(&plus, batch).unwrap();
    let (_, gm) = m.loss_and_grad(&minus, batch).unwrap();
    gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

/// Central-difference Jacobian of the outputs, from `forward` only.
pub fn fd_jacobian(m: &MlpModel, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let k = m.output_dim();
    let mut cols = vec![vec![0.0; p.len()]; k];
    for i in 0..p.len() {
        let h = 1e-6 * (1.0 + p[i].abs());
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let fp = m.forward(&plus, x).unwrap();
        let fm = m.forward(&minus, x).unwrap();
        for c in 0..k {
            cols[c][i] = (fp[c] - fm[c]) / (2.0 * h);
        }
    }
    cols
}

/// Dense outer-product and functional Hessian terms assembled from `forward`
/// alone: Jacobians by central differences, output second derivatives
/// `∇²f^k · d` by mixed central differences, loss derivatives in closed form.
pub fn dense_decomposition(m: &MlpModel, p: &[f64], batch: &Batch, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len() as f64;
    let k = m.output_dim();
    let mut gn = vec![0.0; p.len()];
    let mut func = vec![0.0; p.len()];
    for i in 0..batch.len() {
        let x = batch.input(i);
        let y = batch.label(i).unwrap();
        let f = m.forward(p, x).unwrap();
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = f.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = e.iter().sum();
        let prob: Vec<f64> = e.iter().map(|v| v / s).collect();
        let mut dl = prob.clone();
        dl[y] -= 1.0;
        let jac = fd_jacobian(m, p, x);
        let jd: Vec<f64> = (0..k).map(|c| dot(&jac[c], d)).collect();
        // (diag p − ppᵀ) J d
        let pj: f64 = prob.iter().zip(&jd).map(|(a, b)| a * b).sum();
        let u: Vec<f64> = (0..k).map(|c| prob[c] * jd[c] - prob[c] * pj).collect();
        for c in 0..k {
            for j in 0..p.len() {
                gn[j] += jac[c][j] * u[c] / n;
            }
        }
        let h = 1e-4;
        for j in 0..p.len() {
            let shifted = |sj: f64, sd: f64| -> Vec<f64> {
                let mut q: Vec<f64> = p.iter().zip(d).map(|(a, b)| a + sd * h * b).collect();
                q[j] += sj * h;
                m.forward(&q, x).unwrap()
            };
            let fpp = shifted(1.0, 1.0);
            let fpm = shifted(1.0, -1.0);
            let fmp = shifted(-1.0, 1.0);
            let fmm = shifted(-1.0, -1.0);
            for c in 0..k {
                let second = (fpp[c] - fpm[c] - fmp[c] + fmm[c]) / (4.0 * h * h);
                func[j] += dl[c] * second / n;
            }
        }
    }
    (gn, func)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.random_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}
