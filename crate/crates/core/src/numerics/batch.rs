use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supervision attached to a [`Batch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// Class indices in `[0, K)`.
    Classes(Vec<usize>),
    /// Row-major `n × dim` regression targets.
    Values { dim: usize, data: Vec<f64> },
}

/// A set of labelled inputs, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    dim: usize,
    inputs: Vec<f64>,
    targets: Targets,
}

impl Batch {
    pub fn new(dim: usize, inputs: Vec<f64>, targets: Targets) -> Result<Self> {
        if dim == 0 || inputs.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "input buffer of length {} is not a multiple of dim {dim}",
                inputs.len()
            )));
        }
        let n = inputs.len() / dim;
        let n_targets = match &targets {
            Targets::Classes(c) => c.len(),
            Targets::Values { dim: k, data } => {
                if *k == 0 || data.len() % k != 0 {
                    return Err(Error::InvalidArgument(
                        "target buffer is not a multiple of target dim".into(),
                    ));
                }
                data.len() / k
            }
        };
        if n != n_targets {
            return Err(Error::DimensionMismatch {
                what: "number of targets",
                expected: n,
                actual: n_targets,
            });
        }
        Ok(Batch {
            dim,
            inputs,
            targets,
        })
    }

    pub fn classification(dim: usize, inputs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        Batch::new(dim, inputs, Targets::Classes(labels))
    }

    pub fn regression(dim: usize, inputs: Vec<f64>, target_dim: usize, targets: Vec<f64>) -> Result<Self> {
        Batch::new(
            dim,
            inputs,
            Targets::Values {
                dim: target_dim,
                data: targets,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    /// Class labels, if this is a classification batch.
    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes(c) => Some(c),
            Targets::Values { .. } => None,
        }
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels().map(|l| l[i])
    }

    /// Rows picked by `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        let targets = match &self.targets {
            Targets::Classes(c) => Targets::Classes(indices.iter().map(|&i| c[i]).collect()),
            Targets::Values { dim, data } => {
                let mut out = Vec::with_capacity(indices.len() * dim);
                for &i in indices {
                    out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
                }
                Targets::Values { dim: *dim, data: out }
            }
        };
        Batch {
            dim: self.dim,
            inputs,
            targets,
        }
    }

    /// Concatenates two batches with the same input dim and target kind.
    pub fn concat(&self, other: &Batch) -> Result<Batch> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                what: "batch input dim",
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut inputs = self.inputs.clone();
        inputs.extend_from_slice(&other.inputs);
        let targets = match (&self.targets, &other.targets) {
            (Targets::Classes(a), Targets::Classes(b)) => {
                Targets::Classes(a.iter().chain(b).copied().collect())
            }
            (Targets::Values { dim: da, data: a }, Targets::Values { dim: db, data: b }) if da == db => {
                Targets::Values {
                    dim: *da,
                    data: a.iter().chain(b).copied().collect(),
                }
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "cannot concatenate batches with different target kinds".into(),
                ))
            }
        };
        Ok(Batch {
            dim: self.dim,
            inputs,
            targets,
        })
    }

    /// Applies `f` to every input row in place.
    pub fn map_inputs(&mut self, mut f: impl FnMut(&mut [f64])) {
        for row in self.inputs.chunks_mut(self.dim) {
            f(row);
        }
    }
}
