//! Measurements over runs and quadratic models: forgetting, the quadratic
//! forgetting recursion, null-space residuals, spectra and perturbation
//! scores.

mod forgetting;
mod perturbation;
mod quadratic;
mod spectrum;

pub use forgetting::{compute_forgetting, forgetting_from_tables, param_distance, DistanceRecord, ForgettingReport};
pub use perturbation::{
    curve_seed, default_radii, log_radii, perturbation_curve_with, perturbation_score, perturbation_score_with,
    PerturbationCurve, PerturbationScore, MAX_RESAMPLES,
};
pub use quadratic::{
    quad_forget_average_direct, quad_forget_direct, quad_forget_recursive, recentered, theorem1_residual, QuadHistory,
};
pub use spectrum::{effective_rank, gauss_newton_ratio, hessian_spectrum, hessian_subsample};
