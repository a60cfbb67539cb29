//! Second-order Gaussian model-X knockoffs.
//!
//! Rows are sampled as `x̃ = (I − DΣ⁻¹)x + Lξ` with `LLᵀ = 2D − DΣ⁻¹D`, so in
//! matrix form `X̃ = X·M + Ξ·Lᵀ` where `M = I − Σ⁻¹D` is `cond_mean_mult`.
//! The data-splitting variant replaces `Σ⁻¹` by a CLIME estimate `Ω̂` from a
//! holdout sample and uses `D̂ = c̃/λ_max(Ω̂)·I`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{
    cholesky_jittered, inverse_spd, is_symmetric, max_eigenvalue, min_eigenvalue,
    sample_covariance, symmetrize_mean, Matrix, Vector,
};
use crate::sparse::clime_fit;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSource {
    Known,
    SampleShrunk,
    SplitClime,
}

#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    pub sigma: Matrix,
    pub source: CovarianceSource,
    /// Weight on the scaled identity used to lift the smallest eigenvalue.
    pub shrinkage: f64,
}

impl CovarianceSpec {
    /// Wraps a known covariance after checking symmetry and definiteness.
    pub fn known(sigma: Matrix) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "covariance must be square and non-empty, got {:?}",
                sigma.shape()
            )));
        }
        if !is_symmetric(&sigma, 1e-10) {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let mut sigma = sigma;
        symmetrize_mean(&mut sigma);
        let lam = min_eigenvalue(&sigma);
        if lam < psd_floor(&sigma) {
            return Err(Error::NotPositiveDefinite(format!(
                "covariance has smallest eigenvalue {lam:e}"
            )));
        }
        Ok(Self {
            sigma,
            source: CovarianceSource::Known,
            shrinkage: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

/// `1e-6 ×` the mean diagonal entry.
pub fn psd_floor(sigma: &Matrix) -> f64 {
    1e-6 * sigma.trace() / sigma.nrows().max(1) as f64
}

/// Sample covariance (divisor `n`) shrunk toward `μI`, `μ` the mean variance,
/// just far enough that its smallest eigenvalue reaches the floor.
pub fn estimate_covariance(x: &Matrix) -> Result<CovarianceSpec> {
    let (n, d) = x.shape();
    if n < 2 || d == 0 {
        return Err(Error::DegenerateInput(format!(
            "covariance estimation needs n >= 2 and d >= 1, got {n}×{d}"
        )));
    }
    let s = sample_covariance(x);
    if let Some(j) = (0..d).find(|&j| !(s[(j, j)] > 0.0)) {
        return Err(Error::DegenerateInput(format!("column {j} has zero variance")));
    }
    let mu = s.trace() / d as f64;
    let floor = psd_floor(&s);
    let lam = min_eigenvalue(&s);
    // λ_min((1−w)S + wμI) = (1−w)λ_min(S) + wμ, solved for the floor with a
    // small margin against eigen-solver rounding
    let (sigma, w) = if lam >= floor {
        (s, 0.0)
    } else {
        let target = 2.0 * floor;
        let w = ((target - lam) / (mu - lam)).clamp(0.0, 1.0);
        let mut shrunk = &s * (1.0 - w);
        for j in 0..d {
            shrunk[(j, j)] += w * mu;
        }
        (shrunk, w)
    };
    Ok(CovarianceSpec {
        sigma,
        source: CovarianceSource::SampleShrunk,
        shrinkage: w,
    })
}

/// Equicorrelated `s`: `min(2λ_min(corr Σ), 1)` on the correlation scale,
/// mapped back by the variances.
pub fn solve_s_equicorrelated(spec: &CovarianceSpec) -> Vector {
    let d = spec.dim();
    let sd: Vec<f64> = (0..d).map(|j| spec.sigma[(j, j)].sqrt()).collect();
    let corr = Matrix::from_fn(d, d, |i, j| spec.sigma[(i, j)] / (sd[i] * sd[j]));
    let s = (2.0 * min_eigenvalue(&corr)).clamp(0.0, 1.0);
    Vector::from_fn(d, |j, _| s * sd[j] * sd[j])
}

#[derive(Debug, Clone)]
pub struct KnockoffModel {
    /// `Σ` for the plain model; the holdout sample covariance when split.
    pub sigma: Matrix,
    /// Diagonal of `D`.
    pub s: Vector,
    /// `Σ⁻¹`, or `Ω̂` when split.
    pub precision: Matrix,
    /// `I − Σ⁻¹D`.
    pub cond_mean_mult: Matrix,
    /// Lower factor of `2D − DΣ⁻¹D`.
    pub cond_cov_chol: Matrix,
    /// Diagonal jitter added before the factorization succeeded.
    pub jitter: f64,
    pub c_tilde: Option<f64>,
}

impl KnockoffModel {
    /// Equicorrelated model for a covariance specification.
    pub fn equicorrelated(spec: &CovarianceSpec) -> Result<Self> {
        let s = solve_s_equicorrelated(spec);
        Self::with_s(spec, s)
    }

    pub fn with_s(spec: &CovarianceSpec, s: Vector) -> Result<Self> {
        let d = spec.dim();
        if s.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "s has length {} for a {d}-dimensional covariance",
                s.len()
            )));
        }
        if s.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("s must be nonnegative".into()));
        }
        let mut gap = &spec.sigma * 2.0;
        for j in 0..d {
            gap[(j, j)] -= s[j];
        }
        let lam = min_eigenvalue(&gap);
        if lam < -1e-8 {
            return Err(Error::NotPositiveDefinite(format!(
                "2Σ − D has smallest eigenvalue {lam:e}"
            )));
        }
        let precision = inverse_spd(&spec.sigma)?;
        Self::assemble(spec.sigma.clone(), s, precision, None)
    }

    fn assemble(sigma: Matrix, s: Vector, precision: Matrix, c_tilde: Option<f64>) -> Result<Self> {
        let d = sigma.nrows();
        // Ω·D scales column j of Ω by sⱼ
        let mut omega_d = precision.clone();
        for (mut col, &sj) in omega_d.column_iter_mut().zip(s.iter()) {
            col *= sj;
        }
        let cond_mean_mult = Matrix::identity(d, d) - &omega_d;
        // 2D − DΩD
        let mut cov = Matrix::from_fn(d, d, |i, j| -s[i] * omega_d[(i, j)]);
        for j in 0..d {
            cov[(j, j)] += 2.0 * s[j];
        }
        symmetrize_mean(&mut cov);
        let (cond_cov_chol, jitter) = cholesky_jittered(&cov)?;
        Ok(Self {
            sigma,
            s,
            precision,
            cond_mean_mult,
            cond_cov_chol,
            jitter,
            c_tilde,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// `Var(x, x̃)` when `x ~ (0, Σ)` and `x̃` is drawn from this model.
    ///
    /// For the plain model with the true `Σ` this is
    /// `[[Σ, Σ − D], [Σ − D, Σ]]`; for the split model it is the
    /// conditional covariance given the holdout sample.
    pub fn joint_covariance(&self, sigma: &Matrix) -> Matrix {
        let d = self.dim();
        let m = &self.cond_mean_mult;
        let cross = sigma * m;
        let mut lower = m.tr_mul(&cross) + &self.cond_cov_chol * self.cond_cov_chol.transpose();
        symmetrize_mean(&mut lower);
        let mut g = Matrix::zeros(2 * d, 2 * d);
        g.view_mut((0, 0), (d, d)).copy_from(sigma);
        g.view_mut((0, d), (d, d)).copy_from(&cross);
        g.view_mut((d, 0), (d, d)).copy_from(&cross.transpose());
        g.view_mut((d, d), (d, d)).copy_from(&lower);
        g
    }
}

/// `X̃ = X·M + Ξ·Lᵀ` with `Ξ` drawn row by row from `rng`.
pub fn sample_knockoffs<R: Rng + ?Sized>(
    x: &Matrix,
    model: &KnockoffModel,
    rng: &mut R,
) -> Result<Matrix> {
    let (n, d) = x.shape();
    if d != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "design has {d} columns but the knockoff model has {}",
            model.dim()
        )));
    }
    let mut xi = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            xi[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(x * &model.cond_mean_mult + xi * model.cond_cov_chol.transpose())
}

/// Knockoff model from a holdout sample: `Ω̂` by CLIME at `ϱ₄` on the holdout
/// covariance, `D̂ = c̃/λ_max(Ω̂)·I`.
pub fn build_split_knockoff_model(
    x_holdout: &Matrix,
    c_tilde: f64,
    rho4: f64,
) -> Result<KnockoffModel> {
    if !(c_tilde > 0.0 && c_tilde < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "c_tilde must lie in (0, 2), got {c_tilde}"
        )));
    }
    if !(rho4 > 0.0) {
        return Err(Error::InvalidArgument(format!("rho4 must be positive, got {rho4}")));
    }
    let (n2, d) = x_holdout.shape();
    if n2 < 2 || d == 0 {
        return Err(Error::DegenerateInput(format!(
            "holdout sample must be at least 2×1, got {n2}×{d}"
        )));
    }
    let sigma = sample_covariance(x_holdout);
    let omega = clime_fit(&sigma, rho4)?.theta_sym;
    let lam = max_eigenvalue(&omega);
    if !(lam > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "CLIME precision estimate has largest eigenvalue {lam:e}"
        )));
    }
    let s = Vector::from_element(d, c_tilde / lam);
    KnockoffModel::assemble(sigma, s, omega, Some(c_tilde))
}
