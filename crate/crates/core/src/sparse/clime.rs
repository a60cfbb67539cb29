use rayon::prelude::*;

use super::l1box::{L1BoxOutcome, L1BoxProblem};
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

/// CLIME estimate of a precision matrix.
///
/// `theta` holds the column-wise ℓ₁-minimizers, each satisfying
/// `|Γ̂θⱼ − eⱼ|_∞ ≤ ϱ`; `theta_sym` is their symmetrization keeping, for every
/// pair `(i, j)`, the entry of smaller magnitude. Symmetrization can break
/// feasibility, so both violations are recorded.
#[derive(Debug, Clone)]
pub struct ClimeFit {
    pub theta: Matrix,
    pub theta_sym: Matrix,
    pub rho2: f64,
    /// `|Γ̂·theta − I|_∞`.
    pub max_violation: f64,
    /// `|Γ̂·theta_sym − I|_∞`.
    pub symmetric_violation: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ClimeOptions {
    pub parallel: bool,
}

impl Default for ClimeOptions {
    fn default() -> Self {
        Self { parallel: true }
    }
}

/// `min |θ|₁  s.t.  |Γ̂θ − eⱼ|_∞ ≤ ϱ₂` for every column `j`.
pub fn clime_fit(gram: &Matrix, rho2: f64) -> Result<ClimeFit> {
    clime_fit_with(gram, rho2, ClimeOptions::default())
}

pub fn clime_fit_with(gram: &Matrix, rho2: f64, opts: ClimeOptions) -> Result<ClimeFit> {
    if !gram.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "CLIME needs a square Gram matrix, got {:?}",
            gram.shape()
        )));
    }
    if !(rho2 > 0.0) {
        return Err(Error::InvalidArgument(format!("CLIME penalty must be positive, got {rho2}")));
    }
    let p = gram.nrows();
    let base = L1BoxProblem::new(gram);
    let solve_column = |j: usize| -> Result<Vector> {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        match base.solve(&e, rho2)? {
            L1BoxOutcome::Optimal { theta, .. } => Ok(theta),
            L1BoxOutcome::Infeasible { .. } => Err(Error::SolverInfeasible { column: j, rho: rho2 }),
        }
    };
    let solved: Vec<Result<Vector>> = if opts.parallel {
        (0..p).into_par_iter().map(solve_column).collect()
    } else {
        (0..p).map(solve_column).collect()
    };
    let mut theta = Matrix::zeros(p, p);
    for (j, col) in solved.into_iter().enumerate() {
        theta.set_column(j, &col?);
    }
    let theta_sym = symmetrize_min_magnitude(&theta);
    let max_violation = constraint_violation(gram, &theta);
    let symmetric_violation = constraint_violation(gram, &theta_sym);
    Ok(ClimeFit {
        theta,
        theta_sym,
        rho2,
        max_violation,
        symmetric_violation,
    })
}

/// Keeps whichever of `θᵢⱼ`, `θⱼᵢ` is smaller in magnitude.
pub fn symmetrize_min_magnitude(a: &Matrix) -> Matrix {
    let p = a.nrows();
    let mut s = a.clone();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = if a[(i, j)].abs() <= a[(j, i)].abs() {
                a[(i, j)]
            } else {
                a[(j, i)]
            };
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// `|Γ̂Θ − I|_∞`.
pub fn constraint_violation(gram: &Matrix, theta: &Matrix) -> f64 {
    let mut r = gram * theta;
    for i in 0..r.nrows() {
        r[(i, i)] -= 1.0;
    }
    r.amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gram_shrinks_diagonal() {
        let fit = clime_fit(&Matrix::identity(4, 4), 0.1).unwrap();
        assert!((&fit.theta - Matrix::identity(4, 4) * 0.9).amax() < 1e-12);
        assert!(fit.max_violation <= 0.1 + 1e-12);
    }

    #[test]
    fn diagonal_gram() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.5]));
        let rho = 0.2;
        let fit = clime_fit(&g, rho).unwrap();
        assert!((fit.theta[(0, 0)] - (1.0 - rho) / 2.0).abs() < 1e-12);
        assert_eq!(fit.theta[(1, 0)], 0.0);
        assert!((fit.theta[(1, 1)] - 2.0 * (1.0 - rho)).abs() < 1e-12);
        assert_eq!(fit.theta[(0, 1)], 0.0);
    }

    #[test]
    fn duplicated_column_is_infeasible() {
        let g = Matrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        match clime_fit(&g, 1e-6) {
            Err(Error::SolverInfeasible { column, .. }) => assert!(column < 2),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn symmetrization_rule() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, -0.3, 0.5, 2.0]);
        let s = symmetrize_min_magnitude(&a);
        assert_eq!(s[(0, 1)], -0.3);
        assert_eq!(s[(1, 0)], -0.3);
        assert_eq!(s[(0, 0)], 1.0);
    }
}
