use rand::seq::SliceRandom;
use rand::Rng;

use super::soft_threshold;
use std::cell::OnceCell;

use crate::linalg::{gram, select_rows, Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Maximum number of coordinate sweeps (full or active-set).
    pub max_iter: usize,
    /// Stop when no coordinate moves by more than this (in `√Γⱼⱼ` units).
    pub tol: f64,
    /// KKT slack accepted at termination.
    pub kkt_tol: f64,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
            kkt_tol: 1e-6,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub gamma: Vector,
    pub rho1: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep; empty unless tracing was requested.
    pub objective_trace: Vec<f64>,
}

/// `(1/n)|y − Zγ|² + ϱ|γ|₁`.
pub fn lasso_objective(z: &Matrix, y: &Vector, gamma: &Vector, rho: f64) -> f64 {
    let r = y - z * gamma;
    r.norm_squared() / z.nrows() as f64 + rho * gamma.lp_norm(1)
}

/// A design/response pair prepared for repeated Lasso fits.
pub struct LassoProblem<'a> {
    z: &'a Matrix,
    y: &'a Vector,
    /// `zⱼᵀzⱼ / n`.
    diag: Vec<f64>,
    /// `ZᵀZ/n`, built on the first Newton step.
    gram: OnceCell<Matrix>,
    /// `Zᵀy/n`.
    zty: Vector,
    opts: LassoOptions,
}

/// Inner sweeps on an unchanged active set before trying a Newton step.
const NEWTON_AFTER: usize = 5;

impl<'a> LassoProblem<'a> {
    pub fn new(z: &'a Matrix, y: &'a Vector) -> Result<Self> {
        Self::with_options(z, y, LassoOptions::default())
    }

    pub fn with_options(z: &'a Matrix, y: &'a Vector, opts: LassoOptions) -> Result<Self> {
        if z.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {}",
                z.nrows(),
                y.len()
            )));
        }
        if z.nrows() == 0 {
            return Err(Error::DegenerateInput("empty design".into()));
        }
        let n = z.nrows() as f64;
        let diag = z.column_iter().map(|c| c.norm_squared() / n).collect();
        let zty = z.tr_mul(y) / n;
        Ok(Self {
            z,
            y,
            diag,
            gram: OnceCell::new(),
            zty,
            opts,
        })
    }

    pub fn ncols(&self) -> usize {
        self.z.ncols()
    }

    /// `max |(2/n) zⱼᵀ y|`, the smallest penalty giving `γ̂ = 0`.
    pub fn lambda_max(&self) -> f64 {
        let n = self.z.nrows() as f64;
        (self.z.tr_mul(self.y) * (2.0 / n)).amax()
    }

    /// Cyclic coordinate descent with an active-set inner loop.
    pub fn fit(&self, rho: f64, warm: Option<&Vector>) -> Result<LassoFit> {
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument(format!("Lasso penalty must be positive, got {rho}")));
        }
        let p = self.ncols();
        let n = self.z.nrows() as f64;
        let mut gamma = match warm {
            Some(w) if w.len() == p => w.clone(),
            Some(w) => {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has length {} but design has {p} columns",
                    w.len()
                )))
            }
            None => Vector::zeros(p),
        };
        let half = 0.5 * rho;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let mut residual;

        let update = |j: usize, gamma: &mut Vector, residual: &mut Vector| -> f64 {
            let g = self.diag[j];
            if g <= 0.0 {
                gamma[j] = 0.0;
                return 0.0;
            }
            let col = self.z.column(j);
            let old = gamma[j];
            let c = col.dot(residual) / n + g * old;
            let new = soft_threshold(c, half) / g;
            let delta = new - old;
            if delta != 0.0 {
                residual.axpy(-delta, &col, 1.0);
                gamma[j] = new;
            }
            delta.abs() * g.sqrt()
        };

        'outer: while iterations < self.opts.max_iter {
            // refresh to keep the running residual from drifting
            residual = self.y - self.z * &gamma;
            let mut max_change = 0.0f64;
            for j in 0..p {
                max_change = max_change.max(update(j, &mut gamma, &mut residual));
            }
            iterations += 1;
            if self.opts.trace {
                trace.push(self.objective_from_residual(&residual, &gamma, rho));
            }
            if max_change < self.opts.tol {
                if self.kkt_violation(&gamma, rho) <= self.opts.kkt_tol {
                    converged = true;
                    break;
                }
                continue;
            }
            let active: Vec<usize> = (0..p).filter(|&j| gamma[j] != 0.0).collect();
            let mut inner = 0;
            loop {
                if iterations >= self.opts.max_iter {
                    break 'outer;
                }
                let mut inner_change = 0.0f64;
                for &j in &active {
                    inner_change = inner_change.max(update(j, &mut gamma, &mut residual));
                }
                iterations += 1;
                inner += 1;
                if self.opts.trace {
                    trace.push(self.objective_from_residual(&residual, &gamma, rho));
                }
                if inner_change < self.opts.tol {
                    break;
                }
                if inner == NEWTON_AFTER && self.newton_step(&mut gamma, rho) {
                    break;
                }
            }
        }
        Ok(LassoFit {
            gamma,
            rho1: rho,
            iterations,
            converged,
            objective_trace: trace,
        })
    }

    /// Moves `γ` toward the fixed-sign stationary point of its active set,
    /// stopping where the first coordinate reaches zero. The objective is a
    /// convex quadratic along that segment, so it never increases. Returns
    /// `false` when the active Gram block is singular.
    fn newton_step(&self, gamma: &mut Vector, rho: f64) -> bool {
        let active: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j] != 0.0).collect();
        let k = active.len();
        if k == 0 || k >= self.z.nrows() {
            return false;
        }
        let gram = self.gram.get_or_init(|| gram(self.z));
        let block = Matrix::from_fn(k, k, |a, b| gram[(active[a], active[b])]);
        let Some(chol) = block.cholesky() else {
            return false;
        };
        let rhs = Vector::from_fn(k, |a, _| {
            let j = active[a];
            self.zty[j] - 0.5 * rho * gamma[j].signum()
        });
        let target = chol.solve(&rhs);
        let mut t = 1.0f64;
        let mut blocking = None;
        for (a, &j) in active.iter().enumerate() {
            if target[a] * gamma[j].signum() <= 0.0 {
                let frac = gamma[j] / (gamma[j] - target[a]);
                if frac < t {
                    t = frac;
                    blocking = Some(j);
                }
            }
        }
        for (a, &j) in active.iter().enumerate() {
            gamma[j] += t * (target[a] - gamma[j]);
        }
        if let Some(j) = blocking {
            gamma[j] = 0.0;
        }
        true
    }

    fn objective_from_residual(&self, r: &Vector, gamma: &Vector, rho: f64) -> f64 {
        r.norm_squared() / self.z.nrows() as f64 + rho * gamma.lp_norm(1)
    }

    /// Largest KKT residual of `γ` for penalty `ϱ`.
    pub fn kkt_violation(&self, gamma: &Vector, rho: f64) -> f64 {
        let n = self.z.nrows() as f64;
        let r = self.y - self.z * gamma;
        let grad = self.z.tr_mul(&r) * (2.0 / n);
        grad.iter()
            .zip(gamma.iter())
            .map(|(&g, &b)| {
                if b > 0.0 {
                    (g - rho).abs()
                } else if b < 0.0 {
                    (g + rho).abs()
                } else {
                    (g.abs() - rho).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Lasso fit of `(1/n)|y − Zγ|² + ϱ₁|γ|₁`.
///
/// A fit that exhausts `max_iter` is returned with `converged = false`.
pub fn lasso_fit(z: &Matrix, y: &Vector, rho1: f64) -> Result<LassoFit> {
    LassoProblem::new(z, y)?.fit(rho1, None)
}

/// Log-spaced decreasing grid from `hi` down to `hi·ratio`.
pub fn log_grid(hi: f64, ratio: f64, len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![hi];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|i| hi * (step * i as f64).exp()).collect()
}

/// 100 points spanning `[0.001, 1]·λ_max`.
pub fn default_grid(z: &Matrix, y: &Vector) -> Vec<f64> {
    let n = z.nrows() as f64;
    let mut lmax = (z.tr_mul(y) * (2.0 / n)).amax();
    if !(lmax > 0.0) {
        lmax = 1.0;
    }
    log_grid(lmax, 1e-3, 100)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    if grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidArgument("penalty grid must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("penalty grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// For each column, the largest grid penalty at which it is nonzero (0 if never).
pub fn lasso_entry_path(z: &Matrix, y: &Vector, grid: &[f64]) -> Result<Vector> {
    check_grid(grid)?;
    let problem = LassoProblem::new(z, y)?;
    let p = z.ncols();
    let mut entry = Vector::zeros(p);
    let mut gamma = Vector::zeros(p);
    for &g in grid {
        gamma = problem.fit(g, Some(&gamma))?.gamma;
        for j in 0..p {
            if entry[j] == 0.0 && gamma[j] != 0.0 {
                entry[j] = g;
            }
        }
    }
    Ok(entry)
}

/// Fraction of training variance explained beyond which a fold's path stops.
const CV_SATURATION: f64 = 0.999;

/// Sweep budget per training fit; running out counts as saturation.
const CV_MAX_SWEEPS: usize = 1000;

/// Grid value minimizing mean held-out squared error over `folds` folds.
///
/// Once a fold's training fit saturates (explains more than 99.9% of the
/// response variance, has as many active columns as training rows, or fails
/// to converge), the remaining smaller penalties reuse that fold's last
/// held-out error instead of being fitted.
pub fn cv_lasso_penalty<R: Rng + ?Sized>(
    z: &Matrix,
    y: &Vector,
    folds: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<f64> {
    check_grid(grid)?;
    let n = z.nrows();
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs 2 <= folds <= n, got folds = {folds}, n = {n}"
        )));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut assignment = vec![0usize; n];
    for (i, &row) in perm.iter().enumerate() {
        assignment[row] = i % folds;
    }
    let mut total = vec![0.0; grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let z_train = select_rows(z, &train);
        let y_train = Vector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let z_test = select_rows(z, &test);
        let y_test = Vector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        let opts = LassoOptions {
            max_iter: CV_MAX_SWEEPS,
            ..LassoOptions::default()
        };
        let problem = LassoProblem::with_options(&z_train, &y_train, opts)?;
        let tss = y_train.norm_squared();
        let mut gamma = Vector::zeros(z.ncols());
        let mut last_mse = f64::NAN;
        let mut saturated = false;
        for (k, &g) in grid.iter().enumerate() {
            if !saturated {
                let fit = problem.fit(g, Some(&gamma))?;
                gamma = fit.gamma;
                last_mse = (&y_test - &z_test * &gamma).norm_squared() / test.len() as f64;
                let rss = (&y_train - &z_train * &gamma).norm_squared();
                let active = gamma.iter().filter(|&&v| v != 0.0).count();
                saturated = !fit.converged
                    || active >= train.len()
                    || (tss > 0.0 && rss <= (1.0 - CV_SATURATION) * tss);
            }
            total[k] += last_mse;
        }
    }
    let best = total
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    Ok(grid[best])
}
