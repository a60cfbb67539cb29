//! Debiased inference on the knockoff-augmented design.
//!
//! With `Z = (X, X̃)`, the debiased estimator is
//! `γ̂ᵇᶜ = γ̂ + Θ̂ᵀZᵀ(y − Zγ̂)/n`. The transform `T = [[I, I], [I, −I]]` turns
//! it into sums (`t₁`) and differences (`t₂`) of original and knockoff
//! coefficients, standardized by `σ̂√Λ̂ⱼⱼ` where `Λ̂ = TΘ̂ᵀΓ̂Θ̂Tᵀ`.

use rand::Rng;

use crate::error::Error;
use crate::knockoffs::{estimate_covariance, sample_knockoffs, CovarianceSpec, KnockoffModel};
use crate::linalg::{center_columns, center_vector, gram, hstack, Matrix, Vector};
use crate::normal::two_sided_p;
use crate::sparse::{
    clime_fit_with, cv_lasso_penalty, default_grid, lasso_entry_path, quantile_penalty,
    rate_penalty, scaled_lasso, ClimeOptions, LassoProblem,
};
use crate::Result;

/// Smallest admissible diagonal entry of `Λ̂`.
const LAMBDA_FLOOR: f64 = 1e-12;

/// How a penalty level is chosen from the augmented dimension `p = 2d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyRule {
    /// `c·√(ln p / n)`.
    Rate(f64),
    /// `√2·Φ⁻¹(1 − k₀/p)/√n`.
    Quantile(f64),
    Fixed(f64),
}

impl PenaltyRule {
    pub fn resolve(self, p: usize, n: usize) -> f64 {
        match self {
            PenaltyRule::Rate(c) => rate_penalty(c, p, n),
            PenaltyRule::Quantile(k0) => quantile_penalty(p, n, k0),
            PenaltyRule::Fixed(v) => v,
        }
    }
}

/// Where the knockoff copy comes from.
#[derive(Debug, Clone)]
pub enum KnockoffSource {
    /// Equicorrelated knockoffs from the shrunk sample covariance of `X`.
    Estimated,
    /// Equicorrelated knockoffs from a known covariance.
    Known(CovarianceSpec),
    /// A prebuilt model, e.g. from a holdout sample.
    Model(KnockoffModel),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub knockoffs: KnockoffSource,
    /// Lasso penalty; cross-validated when `None`.
    pub rho1: Option<f64>,
    pub cv_folds: usize,
    /// CLIME penalty; `0.5·√(ln 2d / n)` by default.
    pub rho2: PenaltyRule,
    /// Scaled-Lasso penalty; the quantile rule with `k₀ = 1` by default. The
    /// rate rule at `c = 0.5` overfits badly once `2d ≈ n` and drives `σ̂` low.
    pub rho3: PenaltyRule,
    pub parallel_clime: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            knockoffs: KnockoffSource::Estimated,
            rho1: None,
            cv_folds: 10,
            rho2: PenaltyRule::Rate(0.5),
            rho3: PenaltyRule::Quantile(1.0),
            parallel_clime: true,
        }
    }
}

/// `Z = (X, X̃)`: columns `0..d` original, `d..2d` knockoffs.
#[derive(Debug, Clone)]
pub struct AugmentedDesign {
    pub z: Matrix,
    pub n: usize,
    pub d: usize,
}

impl AugmentedDesign {
    pub fn new(x: &Matrix, knockoffs: &Matrix) -> Result<Self> {
        if x.shape() != knockoffs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "design is {:?} but knockoffs are {:?}",
                x.shape(),
                knockoffs.shape()
            )));
        }
        let z = hstack(x, knockoffs);
        if let Some(j) = z.column_iter().position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::DegenerateInput(format!(
                "augmented column {j} is identically zero"
            )));
        }
        Ok(Self {
            n: x.nrows(),
            d: x.ncols(),
            z,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedFit {
    pub z: AugmentedDesign,
    /// Centered response the fit was computed on.
    pub y: Vector,
    pub gamma_hat: Vector,
    pub rho1: f64,
    pub theta_hat: Matrix,
    pub rho2: f64,
    /// `|Γ̂Θ̂ − I|_∞`.
    pub clime_violation: f64,
    pub gamma_hat_gram: Matrix,
    pub gamma_bc: Vector,
    pub lambda_diag: Vector,
    pub sigma_hat: f64,
    pub rho3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedTests {
    pub t1: Vector,
    pub t2: Vector,
    pub p1: Vector,
    pub p2: Vector,
}

/// `γ̂ + Θ̂ᵀZᵀ(y − Zγ̂)/n`.
///
/// # Panics
/// If the shapes of `z`, `y`, `gamma_hat` and `theta_hat` disagree.
pub fn debias(z: &Matrix, y: &Vector, gamma_hat: &Vector, theta_hat: &Matrix) -> Vector {
    let n = z.nrows() as f64;
    let score = z.tr_mul(&(y - z * gamma_hat)) / n;
    gamma_hat + theta_hat.tr_mul(&score)
}

/// Diagonal of `TΘ̂ᵀΓ̂Θ̂Tᵀ` from the three needed entries of `M = Θ̂ᵀΓ̂Θ̂`
/// per pair.
pub fn lambda_diagonal(theta_hat: &Matrix, gram: &Matrix) -> Result<Vector> {
    let p = theta_hat.nrows();
    if !p.is_multiple_of(2) || !theta_hat.is_square() || gram.shape() != theta_hat.shape() {
        return Err(Error::DimensionMismatch(format!(
            "need matching 2d×2d matrices, got Θ̂ {:?} and Γ̂ {:?}",
            theta_hat.shape(),
            gram.shape()
        )));
    }
    let d = p / 2;
    let gt = gram * theta_hat;
    let m = |a: usize, b: usize| theta_hat.column(a).dot(&gt.column(b));
    let mut lam = Vector::zeros(p);
    for j in 0..d {
        let (mjj, mkk, mjk) = (m(j, j), m(j + d, j + d), m(j, j + d));
        lam[j] = mjj + mkk + 2.0 * mjk;
        lam[j + d] = mjj + mkk - 2.0 * mjk;
    }
    if let Some(index) = lam.iter().position(|&v| !(v > LAMBDA_FLOOR)) {
        return Err(Error::NonPositiveVariance {
            index,
            value: lam[index],
        });
    }
    Ok(lam)
}

/// `t₁ⱼ = √n(γⱼ + γⱼ₊d)/(σ̂√Λⱼⱼ)`, `t₂ⱼ = √n(γⱼ − γⱼ₊d)/(σ̂√Λⱼ₊d,ⱼ₊d)` and
/// their two-sided normal p-values.
pub fn paired_statistics(
    gamma_bc: &Vector,
    lambda_diag: &Vector,
    sigma_hat: f64,
    n: usize,
) -> PairedTests {
    let d = gamma_bc.len() / 2;
    let scale = (n as f64).sqrt() / sigma_hat;
    let t1 = Vector::from_fn(d, |j, _| {
        scale * (gamma_bc[j] + gamma_bc[j + d]) / lambda_diag[j].sqrt()
    });
    let t2 = Vector::from_fn(d, |j, _| {
        scale * (gamma_bc[j] - gamma_bc[j + d]) / lambda_diag[j + d].sqrt()
    });
    let p1 = t1.map(two_sided_p);
    let p2 = t2.map(two_sided_p);
    PairedTests { t1, t2, p1, p2 }
}

/// Centers `x` and `y`, draws knockoffs, and runs [`fit_augmented`].
pub fn fit_pipeline<R: Rng + ?Sized>(
    x: &Matrix,
    y: &Vector,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<(AugmentedFit, PairedTests)> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has {}",
            x.nrows(),
            y.len()
        )));
    }
    let design = augment(x, &config.knockoffs, rng)?;
    fit_augmented(design, y, config, rng)
}

/// Centers `x`, draws its knockoff copy and centers that too.
pub fn augment<R: Rng + ?Sized>(
    x: &Matrix,
    source: &KnockoffSource,
    rng: &mut R,
) -> Result<AugmentedDesign> {
    let mut xc = x.clone();
    center_columns(&mut xc);
    let mut knockoffs = knockoff_copy(&xc, source, rng).map_err(|e| e.at_stage("knockoffs"))?;
    center_columns(&mut knockoffs);
    AugmentedDesign::new(&xc, &knockoffs)
}

fn knockoff_copy<R: Rng + ?Sized>(x: &Matrix, source: &KnockoffSource, rng: &mut R) -> Result<Matrix> {
    match source {
        KnockoffSource::Estimated => {
            let model = KnockoffModel::equicorrelated(&estimate_covariance(x)?)?;
            sample_knockoffs(x, &model, rng)
        }
        KnockoffSource::Known(spec) => {
            let model = KnockoffModel::equicorrelated(spec)?;
            sample_knockoffs(x, &model, rng)
        }
        KnockoffSource::Model(model) => sample_knockoffs(x, model, rng),
    }
}

/// Lasso → Γ̂ → CLIME → scaled Lasso → debias → Λ̂ → paired tests on a given
/// augmented design. `y` is centered here; `rng` feeds cross-validation.
pub fn fit_augmented<R: Rng + ?Sized>(
    design: AugmentedDesign,
    y: &Vector,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<(AugmentedFit, PairedTests)> {
    let z = &design.z;
    let (n, p) = z.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "augmented design has {n} rows but response has {}",
            y.len()
        )));
    }
    let mut y = y.clone();
    center_vector(&mut y);

    let rho1 = match config.rho1 {
        Some(r) => r,
        None => cv_lasso_penalty(z, &y, config.cv_folds, &default_grid(z, &y), rng)
            .map_err(|e| e.at_stage("cross-validation"))?,
    };
    let gamma_hat = LassoProblem::new(z, &y)
        .and_then(|prob| prob.fit(rho1, None))
        .map_err(|e| e.at_stage("lasso"))?
        .gamma;

    let gamma_hat_gram = gram(z);
    let rho2 = config.rho2.resolve(p, n);
    let clime = clime_fit_with(
        &gamma_hat_gram,
        rho2,
        ClimeOptions {
            parallel: config.parallel_clime,
        },
    )
    .map_err(|e| e.at_stage("clime"))?;

    let rho3 = config.rho3.resolve(p, n);
    let sigma_hat = scaled_lasso(z, &y, rho3)
        .map_err(|e| e.at_stage("scaled lasso"))?
        .sigma_hat;

    let gamma_bc = debias(z, &y, &gamma_hat, &clime.theta);
    let lambda_diag =
        lambda_diagonal(&clime.theta, &gamma_hat_gram).map_err(|e| e.at_stage("lambda"))?;
    let tests = paired_statistics(&gamma_bc, &lambda_diag, sigma_hat, n);
    let fit = AugmentedFit {
        z: design,
        y,
        gamma_hat,
        rho1,
        theta_hat: clime.theta,
        rho2,
        clime_violation: clime.max_violation,
        gamma_hat_gram,
        gamma_bc,
        lambda_diag,
        sigma_hat,
        rho3,
    };
    Ok((fit, tests))
}

/// Knockoff-filter statistics `Wⱼ = ϱ₁,ⱼ − ϱ₁,ⱼ₊d` from Lasso entry penalties
/// on the default grid.
pub fn entry_statistics(design: &AugmentedDesign, y: &Vector) -> Result<Vector> {
    let mut y = y.clone();
    center_vector(&mut y);
    let grid = default_grid(&design.z, &y);
    let entry = lasso_entry_path(&design.z, &y, &grid)?;
    let d = design.d;
    Ok(Vector::from_fn(d, |j, _| entry[j] - entry[j + d]))
}
