//! Small dense matrices and a cyclic Jacobi eigensolver.
//!
//! Used for the Lanczos tridiagonal problem and for the explicit quadratic
//! tasks, both of which stay well under a few hundred rows.

use serde::{Deserialize, Serialize};

use super::vector::dot;
use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "dense matrix data",
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(DenseMatrix { n, data })
    }

    /// `Σ_j c_j · c_jᵀ` for the columns `c_j` of a row-major `n × r` factor.
    pub fn gram_of_factor(n: usize, r: usize, factor: &[f64]) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..r).map(|c| factor[i * r + c] * factor[j * r + c]).sum();
                m.set(i, j, s);
                m.set(j, i, s);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ A x`
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.matvec(x))
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &DenseMatrix) {
        debug_assert_eq!(self.n, other.n);
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += alpha * b);
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    /// Largest absolute asymmetry `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    ///
    /// Eigenvalues come back in descending order; `vectors[i]` is the unit
    /// eigenvector of `values[i]`. Only the upper triangle's symmetric part
    /// matters: the input is symmetrized first.
    pub fn sym_eigen(&self) -> SymEigen {
        let n = self.n;
        let mut a = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (a.get(i, j) + a.get(j, i));
                a.set(i, j, s);
                a.set(j, i, s);
            }
        }
        // v stored row-major with eigenvectors as columns
        let mut v = DenseMatrix::identity(n);
        let scale = a.max_abs();
        if scale > 0.0 {
            for _sweep in 0..100 {
                let mut off = 0.0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        off += a.get(i, j) * a.get(i, j);
                    }
                }
                if off.sqrt() <= 1e-15 * scale * (n as f64) {
                    break;
                }
                for p in 0..n {
                    for q in (p + 1)..n {
                        let apq = a.get(p, q);
                        if apq.abs() <= f64::MIN_POSITIVE {
                            continue;
                        }
                        let app = a.get(p, p);
                        let aqq = a.get(q, q);
                        let theta = (aqq - app) / (2.0 * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let t = if theta == 0.0 { 1.0 } else { t };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..n {
                            let akp = a.get(k, p);
                            let akq = a.get(k, q);
                            a.set(k, p, c * akp - s * akq);
                            a.set(k, q, s * akp + c * akq);
                        }
                        for k in 0..n {
                            let apk = a.get(p, k);
                            let aqk = a.get(q, k);
                            a.set(p, k, c * apk - s * aqk);
                            a.set(q, k, s * apk + c * aqk);
                        }
                        for k in 0..n {
                            let vkp = v.get(k, p);
                            let vkq = v.get(k, q);
                            v.set(k, p, c * vkp - s * vkq);
                            v.set(k, q, s * vkp + c * vkq);
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps ties in index order
        order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
        SymEigen {
            values: order.iter().map(|&i| a.get(i, i)).collect(),
            vectors: order
                .iter()
                .map(|&c| (0..n).map(|r| v.get(r, c)).collect())
                .collect(),
        }
    }
}

/// Output of [`DenseMatrix::sym_eigen`].
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_eigenvalues_sorted_descending() {
        let m = DenseMatrix::from_diag(&[1.0, 3.0, 2.0]);
        let e = m.sym_eigen();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1
        let m = DenseMatrix::from_row_major(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = m.sym_eigen();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let v = &e.vectors[0];
        assert!((v[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((v[0] - v[1]).abs() < 1e-14);
    }

    #[test]
    fn reconstructs_matrix() {
        let data = vec![4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0];
        let m = DenseMatrix::from_row_major(3, data).unwrap();
        let e = m.sym_eigen();
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3)
                    .map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j])
                    .sum();
                assert!((r - m.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(DenseMatrix::from_row_major(2, vec![1.0; 3]).is_err());
    }
}
