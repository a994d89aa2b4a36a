//! Deterministic dense numerics: parameter vectors, batches, the MLP family
//! with exact derivatives, and eigen-solvers.
//!
//! All functions here are pure. Identical inputs give bit-identical outputs,
//! and everything is safe to share read-only across threads.

mod batch;
pub mod dense;
mod lanczos;
mod mlp;
mod vector;

pub use batch::{Batch, Targets};
pub use dense::{DenseMatrix, SymEigen};
pub use lanczos::{lanczos_topk, EigenPairs, LanczosResult};
pub use mlp::{argmax_restricted, softmax, Activation, Evaluation, LossKind, MlpModel};
pub use vector::{axpy, dot, norm, sub, ParamVector};

/// Top-`k` eigenpairs of the loss Hessian of `model` on `batch` at `params`,
/// via Lanczos over exact Hessian-vector products.
pub fn hessian_topk(
    model: &MlpModel,
    params: &[f64],
    batch: &Batch,
    k: usize,
    max_iter: usize,
    seed: u64,
) -> crate::Result<LanczosResult> {
    // surface shape errors before entering the closure
    model.hvp(params, batch, &vec![0.0; model.param_count()])?;
    lanczos_topk(
        |v| {
            model
                .hvp(params, batch, v)
                .expect("validated above")
                .into_vec()
        },
        model.param_count(),
        k,
        max_iter,
        seed,
    )
}
