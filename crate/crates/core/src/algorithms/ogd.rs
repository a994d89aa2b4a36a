use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, norm, Batch, MlpModel, ParamVector};

/// Which output gradients are stored per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OgdVariant {
    /// All `K` output columns.
    Full,
    /// Only the ground-truth label's column.
    Gtl,
}

/// Orthonormal set of stored output gradients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OgdBasis {
    pub vectors: Vec<ParamVector>,
    pub per_task_counts: Vec<usize>,
    /// Set once the basis spans the whole parameter space.
    pub saturated: bool,
}

impl OgdBasis {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Gram–Schmidt (two passes) against the basis; appends the normalized
    /// residual unless it is below `1e-10` of the original norm. Returns
    /// whether the vector was kept.
    pub fn push_orthogonalized(&mut self, v: &[f64]) -> bool {
        let p = v.len();
        if self.vectors.len() >= p {
            self.saturated = true;
            return false;
        }
        let original = norm(v);
        if original == 0.0 {
            return false;
        }
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in &self.vectors {
                let c = dot(&r, b);
                axpy(&mut r, -c, b);
            }
        }
        let rn = norm(&r);
        if rn < 1e-10 * original {
            return false;
        }
        r.iter_mut().for_each(|x| *x /= rn);
        self.vectors.push(ParamVector::from_vec(r));
        if self.vectors.len() == p {
            self.saturated = true;
        }
        true
    }
}

impl OgdBasis {
    /// Orthogonalizes `block` against the basis and appends what survives,
    /// in order. Equivalent to calling [`push_orthogonalized`] on each
    /// vector; the projection against the existing basis is done tile by
    /// tile for all vectors at once. Returns the number kept.
    ///
    /// [`push_orthogonalized`]: OgdBasis::push_orthogonalized
    pub fn extend_orthogonalized(&mut self, mut block: Vec<Vec<f64>>) -> usize {
        const TILE: usize = 16;
        let originals: Vec<f64> = block.iter().map(|v| norm(v)).collect();
        let existing = self.vectors.len();
        for _ in 0..2 {
            for tile in self.vectors[..existing].chunks(TILE) {
                for v in &mut block {
                    let c: Vec<f64> = tile.iter().map(|b| dot(v, b)).collect();
                    for (b, c) in tile.iter().zip(c) {
                        axpy(v, -c, b);
                    }
                }
            }
        }
        let mut kept = 0;
        for (mut r, original) in block.into_iter().zip(originals) {
            let p = r.len();
            if self.vectors.len() >= p {
                self.saturated = true;
                break;
            }
            if original == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for b in &self.vectors[existing..] {
                    let c = dot(&r, b);
                    axpy(&mut r, -c, b);
                }
            }
            let rn = norm(&r);
            if rn < 1e-10 * original {
                continue;
            }
            r.iter_mut().for_each(|x| *x /= rn);
            self.vectors.push(ParamVector::from_vec(r));
            kept += 1;
            if self.vectors.len() == p {
                self.saturated = true;
            }
        }
        kept
    }
}

/// Appends the output gradients of `samples` at the task-end parameters.
pub fn ogd_extend_basis(
    basis: &OgdBasis,
    model: &MlpModel,
    params: &[f64],
    samples: &Batch,
    variant: OgdVariant,
) -> Result<OgdBasis> {
    let mut block = Vec::new();
    for i in 0..samples.len() {
        let x = samples.input(i);
        match variant {
            OgdVariant::Full => block.extend(model.output_jacobian(params, x)?.into_iter().map(ParamVector::into_vec)),
            OgdVariant::Gtl => {
                let y = samples.label(i).ok_or_else(|| {
                    Error::InvalidArgument("the gtl variant needs class labels".into())
                })?;
                block.push(model.output_gradient(params, x, y)?.into_vec());
            }
        }
    }
    let mut out = basis.clone();
    let added = if out.saturated { 0 } else { out.extend_orthogonalized(block) };
    out.per_task_counts.push(added);
    Ok(out)
}

/// Removes the component of `g` in the span of the basis.
pub fn ogd_project(g: &[f64], basis: &OgdBasis) -> ParamVector {
    let mut out = g.to_vec();
    for v in &basis.vectors {
        let c = dot(&out, v);
        axpy(&mut out, -c, v);
    }
    ParamVector::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, LossKind};

    #[test]
    fn projection_examples() {
        let mut b = OgdBasis::default();
        assert_eq!(ogd_project(&[1.0, 1.0], &b).as_slice(), &[1.0, 1.0]);
        b.push_orthogonalized(&[2.0, 0.0]);
        assert_eq!(ogd_project(&[1.0, 1.0], &b).as_slice(), &[0.0, 1.0]);
        assert!(ogd_project(&[-4.0, 0.0], &b).norm() < 1e-10);
    }

    #[test]
    fn block_extension_matches_sequential_pushes() {
        let vs: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..30).map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + (i == j) as u8 as f64).collect())
            .collect();
        let mut seq = OgdBasis::default();
        let mut blk = OgdBasis::default();
        for v in &vs[..20] {
            seq.push_orthogonalized(v);
            blk.push_orthogonalized(v);
        }
        let kept_seq = vs[20..].iter().filter(|v| seq.push_orthogonalized(v)).count();
        let kept_blk = blk.extend_orthogonalized(vs[20..].to_vec());
        assert_eq!(kept_seq, kept_blk);
        assert_eq!(seq.len(), blk.len());
        // same span: every vector of one basis is reproduced by the other
        for v in &blk.vectors {
            assert!(ogd_project(v, &seq).norm() < 1e-8);
        }
        for (i, a) in blk.vectors.iter().enumerate() {
            for b in &blk.vectors[..i] {
                assert!(a.dot(b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn saturates_at_dimension() {
        let mut b = OgdBasis::default();
        assert!(b.push_orthogonalized(&[1.0, 1.0]));
        assert!(b.push_orthogonalized(&[1.0, 0.0]));
        assert!(b.saturated);
        assert!(!b.push_orthogonalized(&[0.3, 0.7]));
    }

    #[test]
    fn gtl_single_sample_and_duplicates() {
        let m = MlpModel::new(vec![2, 3, 2], Activation::Tanh, LossKind::CrossEntropy).unwrap();
        let p = m.init_params(4);
        let one = Batch::classification(2, vec![0.5, -1.0], vec![1]).unwrap();
        let b = ogd_extend_basis(&OgdBasis::default(), &m, &p, &one, OgdVariant::Gtl).unwrap();
        assert_eq!(b.len(), 1);
        let g = m.output_gradient(&p, &[0.5, -1.0], 1).unwrap();
        let gn = g.normalized().unwrap();
        for (a, e) in b.vectors[0].iter().zip(gn.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
        let again = ogd_extend_basis(&b, &m, &p, &one, OgdVariant::Gtl).unwrap();
        assert_eq!(again.len(), 1);
        assert_eq!(again.per_task_counts, vec![1, 0]);
    }
}
