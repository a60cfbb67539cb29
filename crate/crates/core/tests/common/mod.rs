//! Brute-force oracles shared by the integration tests and the acceptance
//! target. None of these reuse the library's decision or solver code.
#![allow(dead_code)]

use knockoff_fdr::linalg::{Matrix, Vector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Step-up with per-rank cutoff `step`, testing every candidate `R̃` by
/// counting: `P₍ᵢ₎ ≤ i·step ⟺ #{j : pⱼ ≤ i·step} ≥ i`.
pub fn brute_step_up(p: &[f64], step: f64) -> (usize, Vec<usize>) {
    let d = p.len();
    let mut r = 0;
    for i in 1..=d {
        let cutoff = i as f64 * step;
        if p.iter().filter(|&&v| v <= cutoff).count() >= i {
            r = i;
        }
    }
    if r == 0 {
        return (0, vec![]);
    }
    let cutoff = r as f64 * step;
    (r, (0..d).filter(|&j| p[j] <= cutoff).collect())
}

pub fn brute_bh(p: &[f64], alpha: f64) -> (usize, Vec<usize>) {
    brute_step_up(p, alpha / p.len() as f64)
}

pub fn brute_bonf_bh_general(p1: &[f64], p2: &[f64], alpha: f64, lambda: f64) -> (usize, Vec<usize>) {
    let screened: Vec<f64> = (0..p1.len())
        .map(|j| if p1[j] > lambda { 1.0 } else { p2[j] })
        .collect();
    brute_step_up(&screened, alpha / (lambda * p1.len() as f64))
}

/// `FDP̂(t)` (plus adds one to the numerator) by direct counting.
pub fn fdp_hat(w: &[f64], t: f64, plus: bool) -> f64 {
    let mut neg = if plus { 1usize } else { 0 };
    let mut pos = 0usize;
    for &v in w {
        if v < -t {
            neg += 1;
        }
        if v > t {
            pos += 1;
        }
    }
    neg as f64 / pos.max(1) as f64
}

/// Scans every `|wⱼ| > 0`, every midpoint between consecutive values and a
/// point beyond the largest; the estimate is constant on `[aₖ, aₖ₊₁)`, so the
/// first qualifying point is the threshold.
pub fn brute_knockoff(w: &[f64], alpha: f64, plus: bool) -> (f64, Vec<usize>) {
    let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mags.dedup();
    let mut scan = Vec::new();
    for (i, &a) in mags.iter().enumerate() {
        scan.push(a);
        match mags.get(i + 1) {
            Some(&b) => scan.push(0.5 * (a + b)),
            None => scan.push(a + 1.0),
        }
    }
    let mut tau = f64::INFINITY;
    for &t in &scan {
        if fdp_hat(w, t, plus) <= alpha {
            // snap back to the left end of the constant piece
            tau = mags.iter().copied().filter(|&a| a <= t).fold(0.0, f64::max);
            break;
        }
    }
    (tau, (0..w.len()).filter(|&j| w[j] > tau).collect())
}

pub fn lasso_objective(z: &Matrix, y: &Vector, g: &Vector, rho: f64) -> f64 {
    let n = z.nrows() as f64;
    let mut rss = 0.0;
    for i in 0..z.nrows() {
        let mut fit = 0.0;
        for j in 0..z.ncols() {
            fit += z[(i, j)] * g[j];
        }
        rss += (y[i] - fit).powi(2);
    }
    rss / n + rho * g.iter().map(|v| v.abs()).sum::<f64>()
}

/// Minimum of the Lasso objective over the lattice `{−2, −2+h, …, 2}ᵖ`.
pub fn grid_lasso_min(z: &Matrix, y: &Vector, rho: f64, h: f64) -> f64 {
    let p = z.ncols();
    let steps = (4.0 / h).round() as usize + 1;
    let mut idx = vec![0usize; p];
    let mut best = f64::INFINITY;
    loop {
        let g = Vector::from_fn(p, |j, _| -2.0 + h * idx[j] as f64);
        best = best.min(lasso_objective(z, y, &g, rho));
        let mut k = 0;
        loop {
            if k == p {
                return best;
            }
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Ordinary least squares through Householder QR, independent of the
/// library's Cholesky-based routines.
pub fn ols(z: &Matrix, y: &Vector) -> Vector {
    let qr = z.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full column rank")
}

pub fn gaussian_matrix<R: Rng>(n: usize, p: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// One-sample Kolmogorov–Smirnov statistic against Uniform[0, 1].
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov 1% critical value `√(−ln 0.005 / 2)/√n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Monte Carlo FDR allowance `α + 2√(α(1−α)/reps)`.
pub fn fdr_bound(alpha: f64, reps: usize) -> f64 {
    alpha + 2.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt()
}

/// Largest KKT residual of `(1/n)|y − Zγ|² + ϱ|γ|₁`, computed from scratch.
pub fn kkt_residual(z: &Matrix, y: &Vector, g: &Vector, rho: f64) -> f64 {
    let (n, p) = z.shape();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let mut grad = 0.0;
        for i in 0..n {
            let mut fit = 0.0;
            for k in 0..p {
                fit += z[(i, k)] * g[k];
            }
            grad += z[(i, j)] * (y[i] - fit);
        }
        grad *= 2.0 / n as f64;
        let v = if g[j] != 0.0 {
            (grad - rho * g[j].signum()).abs()
        } else {
            (grad.abs() - rho).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

pub fn sparse_response<R: Rng>(z: &Matrix, k: usize, rng: &mut R) -> Vector {
    let p = z.ncols();
    let mut beta = Vector::zeros(p);
    for j in 0..k.min(p) {
        beta[j] = rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    z * beta + gaussian_vector(z.nrows(), rng)
}

/// Random SPD matrix with eigenvalues in [1, 10].
pub fn conditioned<R: Rng>(p: usize, rng: &mut R) -> Matrix {
    let q = gaussian_matrix(p, p, rng).qr().q();
    let eig = Vector::from_fn(p, |_, _| rng.random_range(1.0..10.0));
    &q * Matrix::from_diagonal(&eig) * q.transpose()
}

pub fn ar1(d: usize, rho: f64) -> Matrix {
    Matrix::from_fn(d, d, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// `[[Σ, Σ − D], [Σ − D, Σ]]` with the equicorrelated
/// `Dⱼⱼ = min(1, 2λ_min(corr Σ))·Σⱼⱼ`.
pub fn knockoff_target(sigma: &Matrix) -> Matrix {
    let d = sigma.nrows();
    let corr = Matrix::from_fn(d, d, |i, j| sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt());
    let s = (2.0 * corr.symmetric_eigen().eigenvalues.min()).min(1.0);
    let off = Matrix::from_fn(d, d, |i, j| sigma[(i, j)] - if i == j { s * sigma[(i, i)] } else { 0.0 });
    Matrix::from_fn(2 * d, 2 * d, |i, j| match (i < d, j < d) {
        (true, true) => sigma[(i, j)],
        (false, false) => sigma[(i - d, j - d)],
        (true, false) => off[(i, j - d)],
        (false, true) => off[(i - d, j)],
    })
}

pub fn empirical_covariance(z: &Matrix) -> Matrix {
    let n = z.nrows() as f64;
    let mut c = z.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    c.transpose() * &c / (n - 1.0)
}

/// Rows drawn from N(0, Σ) through the Cholesky factor of `sigma`.
pub fn draw_design(n: usize, sigma: &Matrix, seed: u64) -> Matrix {
    let mut rng = knockoff_fdr::rng::stream(seed);
    let l = sigma.clone().cholesky().unwrap().l();
    gaussian_matrix(n, sigma.nrows(), &mut rng) * l.transpose()
}

/// Whether every CLIME column LP `|Γθ − eⱼ|∞ ≤ ϱ` is feasible, by the dense
/// split-variable simplex (θ = u − v) rather than the box solver.
pub fn clime_feasible_by_split_lp(g: &Matrix, rho: f64) -> bool {
    use knockoff_fdr::sparse::simplex::{solve, LpOutcome};
    let p = g.nrows();
    let a = Matrix::from_fn(2 * p, 2 * p, |i, k| {
        let v = g[(i % p, k % p)];
        if (i < p) == (k < p) { v } else { -v }
    });
    (0..p).all(|j| {
        let b: Vec<f64> = (0..2 * p)
            .map(|i| {
                let e = if i % p == j { 1.0 } else { 0.0 };
                if i < p { rho + e } else { rho - e }
            })
            .collect();
        !matches!(solve(&a, &b, &vec![1.0; 2 * p]).expect("pivot budget"), LpOutcome::Infeasible { .. })
    })
}
