use super::lasso::{LassoOptions, LassoProblem};
use crate::linalg::{Matrix, Vector};
use crate::{Error, Result};

const OUTER_MAX_ITER: usize = 100;
const OUTER_TOL: f64 = 1e-10;
const RESIDUAL_FLOOR: f64 = 1e-12;

/// Joint Lasso/noise-level fit of
/// `(1/(2σn))|y − Zγ|² + σ/2 + ϱ₃|γ|₁`.
#[derive(Debug, Clone)]
pub struct ScaledLassoFit {
    pub gamma: Vector,
    pub sigma_hat: f64,
    pub rho3: f64,
    /// Outer (σ-update) iterations used.
    pub iterations: usize,
    pub converged: bool,
}

impl ScaledLassoFit {
    /// Penalty of the equivalent `(1/n)`-scaled Lasso at the fitted noise level.
    pub fn induced_penalty(&self) -> f64 {
        2.0 * self.sigma_hat * self.rho3
    }
}

pub fn scaled_lasso(z: &Matrix, y: &Vector, rho3: f64) -> Result<ScaledLassoFit> {
    scaled_lasso_with(z, y, rho3, LassoOptions::default())
}

/// Alternates the Lasso step at penalty `2σϱ₃` with `σ ← |y − Zγ|₂/√n`.
pub fn scaled_lasso_with(
    z: &Matrix,
    y: &Vector,
    rho3: f64,
    opts: LassoOptions,
) -> Result<ScaledLassoFit> {
    if !(rho3 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scaled-Lasso penalty must be positive, got {rho3}"
        )));
    }
    let problem = LassoProblem::with_options(z, y, opts)?;
    let sqrt_n = (z.nrows() as f64).sqrt();
    let mut sigma = y.norm() / sqrt_n;
    if sigma < RESIDUAL_FLOOR {
        return Err(Error::DegenerateResidual(sigma));
    }
    let mut gamma = Vector::zeros(z.ncols());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < OUTER_MAX_ITER {
        iterations += 1;
        gamma = problem.fit(2.0 * sigma * rho3, Some(&gamma))?.gamma;
        let next = (y - z * &gamma).norm() / sqrt_n;
        if next < RESIDUAL_FLOOR {
            return Err(Error::DegenerateResidual(next));
        }
        let change = (next - sigma).abs();
        sigma = next;
        if change <= OUTER_TOL * sigma {
            converged = true;
            break;
        }
    }
    Ok(ScaledLassoFit {
        gamma,
        sigma_hat: sigma,
        rho3,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fit_gives_root_mean_square() {
        let z = Matrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let y = Vector::from_vec(vec![3.0, 4.0]);
        // |zᵀy|/n = 0.5 is below σ̂ϱ₃ for ϱ₃ = 10, so γ̂ = 0
        let fit = scaled_lasso(&z, &y, 10.0).unwrap();
        assert!(fit.gamma.iter().all(|&g| g == 0.0));
        assert!((fit.sigma_hat - 3.5355339059327378).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn exact_fit_is_degenerate() {
        let z = Matrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 3.0]);
        let y = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let err = scaled_lasso(&z, &y, 0.05).unwrap_err();
        assert!(matches!(err, Error::DegenerateResidual(_)), "{err:?}");
        let err = scaled_lasso(&z, &Vector::zeros(3), 0.05).unwrap_err();
        assert!(matches!(err, Error::DegenerateResidual(_)));
    }
}
