mod common;

use knockoff_fdr::inference::{augment, fit_augmented, KnockoffSource, PenaltyRule, PipelineConfig};
use knockoff_fdr::linalg::{Matrix, Vector};
use knockoff_fdr::rng::stream;
use knockoff_fdr::sparse::{clime_fit, lasso_fit, scaled_lasso, LassoProblem};
use rand::Rng;

#[test]
fn lasso_satisfies_kkt_on_random_instances() {
    let mut rng = stream(11);
    for _ in 0..100 {
        let n = rng.random_range(10..60);
        let p = rng.random_range(2..50);
        let z = common::gaussian_matrix(n, p, &mut rng);
        let y = common::sparse_response(&z, 3, &mut rng);
        let lmax = LassoProblem::new(&z, &y).unwrap().lambda_max();
        let rho = lmax * 10f64.powf(rng.random_range(-2.0..0.0));
        let fit = lasso_fit(&z, &y, rho).unwrap();
        assert!(fit.converged, "n={n} p={p} rho={rho}");
        let kkt = common::kkt_residual(&z, &y, &fit.gamma, rho);
        assert!(kkt <= 1e-6, "KKT residual {kkt} at n={n} p={p}");
    }
}

#[test]
fn lasso_matches_grid_minimum_in_low_dimension() {
    let mut rng = stream(12);
    for (p, h, count) in [(1, 0.001, 10), (2, 0.01, 6), (3, 0.05, 4), (4, 0.1, 3)] {
        let mut done = 0;
        while done < count {
            let n = 30;
            let z = common::gaussian_matrix(n, p, &mut rng);
            let y = common::sparse_response(&z, p, &mut rng);
            let lmax = LassoProblem::new(&z, &y).unwrap().lambda_max();
            let rho = lmax * rng.random_range(0.05..0.8);
            let fit = lasso_fit(&z, &y, rho).unwrap();
            // the lattice only covers [-2, 2]^p
            if fit.gamma.iter().any(|v| v.abs() > 1.9) {
                continue;
            }
            done += 1;
            let solver = common::lasso_objective(&z, &y, &fit.gamma, rho);
            let grid = common::grid_lasso_min(&z, &y, rho, h);
            assert!(solver <= grid + 1e-10, "solver {solver} above grid {grid}");
            // nearest lattice point is within h/2 per coordinate of the optimum;
            // the objective gap there is at most 2ϱ|δ|₁ + δᵀGδ
            let g = z.transpose() * &z / n as f64;
            let delta = h / 2.0;
            let gabs: f64 = g.iter().map(|v| v.abs()).sum();
            let slack = 2.0 * rho * p as f64 * delta + gabs * delta * delta;
            assert!(grid <= solver + slack + 1e-12, "grid {grid} vs solver {solver}, slack {slack}");
        }
    }
}

/// Singular Γ̂ (p > n) may make a column infeasible; every such report must
/// be confirmed by an independent LP, and every returned Θ̂ must be feasible.
#[test]
fn clime_columns_are_feasible() {
    let mut rng = stream(13);
    let mut infeasible = 0;
    for _ in 0..40 {
        let n = rng.random_range(20..60);
        let p = rng.random_range(4..n + 15);
        let z = common::gaussian_matrix(n, p, &mut rng);
        let g = z.transpose() * &z / n as f64;
        let rho = 0.5 * ((p as f64).ln() / n as f64).sqrt();
        match clime_fit(&g, rho) {
            Ok(fit) => {
                let worst = (&g * &fit.theta - Matrix::identity(p, p)).amax();
                assert!(worst <= rho + 1e-8, "violation {worst} > {rho}");
            }
            Err(e) => {
                assert!(p > n, "full-rank Γ̂ reported infeasible: {e}");
                assert!(!common::clime_feasible_by_split_lp(&g, rho), "false infeasibility: {e}");
                infeasible += 1;
            }
        }
    }
    assert!(infeasible < 40);
}

#[test]
fn clime_approaches_inverse_at_tiny_penalty() {
    let mut rng = stream(14);
    for _ in 0..20 {
        let p = rng.random_range(2..=10);
        let g = common::conditioned(p, &mut rng);
        let inv = g.clone().try_inverse().unwrap();
        let fit = clime_fit(&g, 1e-6).unwrap();
        let gap = (&fit.theta - &inv).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(gap <= 1e-3, "|Θ̂ − Γ⁻¹|∞ = {gap} at p = {p}");
    }
}

#[test]
fn scaled_lasso_is_a_fixed_point() {
    let mut rng = stream(15);
    for _ in 0..20 {
        let n = rng.random_range(40..120);
        let p = rng.random_range(5..80);
        let z = common::gaussian_matrix(n, p, &mut rng);
        let y = common::sparse_response(&z, 3, &mut rng);
        let rho3 = (2.0 * (p as f64).ln() / n as f64).sqrt();
        let fit = scaled_lasso(&z, &y, rho3).unwrap();
        assert!(fit.converged);
        let resid = (&y - &z * &fit.gamma).norm() / (n as f64).sqrt();
        assert!((fit.sigma_hat - resid).abs() <= 1e-6, "σ̂ {} vs {resid}", fit.sigma_hat);
        let kkt = common::kkt_residual(&z, &y, &fit.gamma, 2.0 * fit.sigma_hat * rho3);
        assert!(kkt <= 1e-6, "inner KKT {kkt}");
    }
}

#[test]
fn scaled_lasso_recovers_noise_level() {
    let (n, p) = (2000, 100);
    let rho3 = PipelineConfig::default().rho3.resolve(p, n);
    for seed in 0..3 {
        let mut rng = stream(100 + seed);
        let z = common::gaussian_matrix(n, p, &mut rng);
        let y = common::sparse_response(&z, 5, &mut rng);
        let fit = scaled_lasso(&z, &y, rho3).unwrap();
        assert!((0.9..=1.1).contains(&fit.sigma_hat), "σ̂ = {}", fit.sigma_hat);
    }
}

#[test]
fn debiased_estimate_matches_least_squares() {
    let mut rng = stream(16);
    for _ in 0..5 {
        let x = common::gaussian_matrix(50, 3, &mut rng);
        let y = &x * Vector::from_vec(vec![1.0, 0.0, -0.5]) + common::gaussian_vector(50, &mut rng);
        let design = augment(&x, &KnockoffSource::Estimated, &mut rng).unwrap();
        let config = PipelineConfig {
            rho1: Some(0.05),
            rho2: PenaltyRule::Fixed(1e-8),
            ..PipelineConfig::default()
        };
        let (fit, _) = fit_augmented(design, &y, &config, &mut rng).unwrap();
        let ls = common::ols(&fit.z.z, &fit.y);
        let gap = (&fit.gamma_bc - &ls).amax();
        assert!(gap <= 1e-3, "debiased vs OLS gap {gap}");
    }
}
