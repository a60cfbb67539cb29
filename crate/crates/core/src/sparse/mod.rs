//! Convex estimators used by the pipeline.
//!
//! All solvers use the objective scaling of the working model: the Lasso loss
//! is `(1/n)|y − Zγ|²` (not `1/(2n)`), so a coordinate update soft-thresholds
//! at `ϱ₁/2` divided by the column's Gram entry. Columns are never rescaled
//! inside a solver.

mod clime;
pub mod l1box;
mod lasso;
mod scaled;
pub mod simplex;

pub use clime::{clime_fit, clime_fit_with, ClimeFit, ClimeOptions};
pub use lasso::{
    cv_lasso_penalty, default_grid, lasso_entry_path, lasso_fit, lasso_objective, log_grid,
    LassoFit, LassoOptions, LassoProblem,
};
pub use scaled::{scaled_lasso, scaled_lasso_with, ScaledLassoFit};

use crate::normal;

/// Rate-based penalty `c·√(ln p / n)` for a design with `p` columns.
pub fn rate_penalty(c: f64, p: usize, n: usize) -> f64 {
    c * ((p.max(2) as f64).ln() / n as f64).sqrt()
}

/// Quantile-based scaled-Lasso penalty `√2·Φ⁻¹(1 − k₀/p)/√n`.
///
/// When `k₀/p ≥ 1/2` the quantile is not positive; the universal level
/// `√(2 ln p / n)` is used instead.
pub fn quantile_penalty(p: usize, n: usize, k0: f64) -> f64 {
    let tail = (k0 / p as f64).max(1e-300);
    if tail >= 0.5 {
        return (2.0 * (p.max(2) as f64).ln() / n as f64).sqrt();
    }
    std::f64::consts::SQRT_2 * normal::quantile(1.0 - tail) / (n as f64).sqrt()
}

pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
