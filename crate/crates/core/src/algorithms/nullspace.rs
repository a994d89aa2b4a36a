use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, norm, DenseMatrix, EigenPairs, ParamVector};
use crate::tasks::QuadraticTaskSpec;

/// Output of [`nullspace_gd_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceStep {
    pub direction: ParamVector,
    /// Eigen-directions projected out.
    pub removed: usize,
    /// Every direction of the space was above threshold; `direction` is 0.
    pub exhausted: bool,
}

/// Projects `g` onto the orthogonal complement of the eigenvectors whose
/// eigenvalue exceeds `tol · λ_max`.
pub fn nullspace_gd_step(g: &[f64], pairs: &EigenPairs, tol: f64) -> NullspaceStep {
    let lmax = pairs.max_eigenvalue().unwrap_or(0.0);
    let cut = tol * lmax;
    let active: Vec<&ParamVector> = pairs
        .eigenvalues
        .iter()
        .zip(&pairs.eigenvectors)
        .filter(|(&l, _)| l > cut)
        .map(|(_, v)| v)
        .collect();
    if !active.is_empty() && active.len() >= g.len() {
        return NullspaceStep {
            direction: ParamVector::zeros(g.len()),
            removed: active.len(),
            exhausted: true,
        };
    }
    let mut d = g.to_vec();
    for _ in 0..2 {
        for v in &active {
            let c = dot(&d, v);
            axpy(&mut d, -c, v);
        }
    }
    NullspaceStep {
        direction: ParamVector::from_vec(d),
        removed: active.len(),
        exhausted: false,
    }
}

/// `(1/n) Σ H_o` over the given tasks.
pub fn average_hessian(specs: &[QuadraticTaskSpec]) -> Result<DenseMatrix> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidArgument("average of zero Hessians".into()))?;
    let mut acc = DenseMatrix::zeros(first.dim());
    for s in specs {
        if s.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                what: "task dimension",
                expected: first.dim(),
                actual: s.dim(),
            });
        }
        acc.add_scaled(1.0 / specs.len() as f64, &s.hessian);
    }
    Ok(acc)
}

/// Full eigendecomposition of a dense symmetric matrix as [`EigenPairs`].
pub fn dense_eigenpairs(m: &DenseMatrix) -> EigenPairs {
    let e = m.sym_eigen();
    EigenPairs {
        eigenvalues: e.values,
        eigenvectors: e.vectors.into_iter().map(ParamVector::from_vec).collect(),
    }
}

/// Minimizes a quadratic task over `start + null(H̄)` by conjugate gradients
/// on the projected problem, where the null space is read off `pairs` as in
/// [`nullspace_gd_step`].
pub fn minimize_in_nullspace(
    spec: &QuadraticTaskSpec,
    start: &[f64],
    pairs: &EigenPairs,
    tol: f64,
    max_iter: usize,
) -> Result<ParamVector> {
    let p = spec.dim();
    if start.len() != p {
        return Err(Error::DimensionMismatch {
            what: "start point",
            expected: p,
            actual: start.len(),
        });
    }
    let project = |v: &[f64]| nullspace_gd_step(v, pairs, tol);
    let first = project(&spec.grad(start));
    if first.exhausted {
        return Err(Error::NoAdmissibleDirection);
    }
    let mut x = start.to_vec();
    let mut r: Vec<f64> = first.direction.iter().map(|v| -v).collect();
    let stop = 1e-15 * (1.0 + norm(&r)) * (1.0 + spec.hessian.max_abs());
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= stop {
            break;
        }
        let hd = project(&spec.hessian_apply(&d)).direction;
        let curv = dot(&d, &hd);
        if curv <= 0.0 {
            break;
        }
        let alpha = rr / curv;
        axpy(&mut x, alpha, &d);
        let g = spec.grad(&x);
        r = project(&g).direction.iter().map(|v| -v).collect();
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        d = r.iter().zip(&d).map(|(a, b)| a + beta * b).collect();
        d = project(&d).direction.into_vec();
        rr = rr_new;
    }
    Ok(ParamVector::from_vec(x))
}

/// Sequential exact minimization where task `t ≥ 2` may only move inside the
/// null space of the average Hessian of tasks `1..t`. Returns `θ_1..θ_T`;
/// task 1 is minimized without constraint from `theta0`.
pub fn run_quadratic_nullspace(specs: &[QuadraticTaskSpec], theta0: &[f64], tol: f64) -> Result<Vec<ParamVector>> {
    let mut thetas: Vec<ParamVector> = Vec::with_capacity(specs.len());
    let iters = 4 * theta0.len() + 10;
    for (t, spec) in specs.iter().enumerate() {
        let start = thetas.last().map(|v| v.as_slice()).unwrap_or(theta0);
        let pairs = if t == 0 {
            EigenPairs::default()
        } else {
            dense_eigenpairs(&average_hessian(&specs[..t])?)
        };
        thetas.push(minimize_in_nullspace(spec, start, &pairs, tol, iters)?);
    }
    Ok(thetas)
}
