//! Simulation harness: designs, signals, errors and replication bookkeeping.

use std::time::Instant;

use nalgebra::Cholesky;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;

use crate::error::Error;
use crate::inference::{
    augment, entry_statistics, fit_augmented, KnockoffSource, PairedTests, PenaltyRule,
    PipelineConfig,
};
use crate::knockoffs::{build_split_knockoff_model, CovarianceSpec};
use crate::linalg::{center_columns, center_vector, select_columns, Matrix, Vector};
use crate::rng::replication_stream;
use crate::sparse::{cv_lasso_penalty, default_grid, lasso_fit, rate_penalty};
use crate::testing::{
    bh_procedure, bonferroni_bh, bonferroni_bh_general, knockoff_filter, score, DecisionResult,
    Procedure, ScoreCard,
};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    /// `Σ = I`.
    Iid,
    /// `Σᵢⱼ = ρ^|i−j|`.
    Ar1(f64),
    /// `Σᵢⱼ = ρ` for `i ≠ j` in the same block of `size` consecutive indices.
    Block { rho: f64, size: usize },
}

impl Setting {
    pub const BLOCK: Setting = Setting::Block { rho: 0.2, size: 20 };

    pub fn covariance(&self, d: usize) -> Matrix {
        match *self {
            Setting::Iid => Matrix::identity(d, d),
            Setting::Ar1(rho) => Matrix::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32)),
            Setting::Block { rho, size } => Matrix::from_fn(d, d, |i, j| {
                if i == j {
                    1.0
                } else if i / size == j / size {
                    rho
                } else {
                    0.0
                }
            }),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Setting::Iid => Ok(()),
            Setting::Ar1(rho) if rho > -1.0 && rho < 1.0 => Ok(()),
            Setting::Ar1(rho) => Err(Error::InvalidArgument(format!(
                "AR(1) coefficient must lie in (-1, 1), got {rho}"
            ))),
            Setting::Block { size: 0, .. } => {
                Err(Error::InvalidArgument("block size must be positive".into()))
            }
            Setting::Block { rho, .. } if rho.is_finite() => Ok(()),
            Setting::Block { rho, .. } => Err(Error::InvalidArgument(format!(
                "block correlation must be finite, got {rho}"
            ))),
        }
    }
}

/// Rows `N(0, Σ)` through a Cholesky factor computed once.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    setting: Setting,
    /// `None` for the identity.
    factor: Option<Matrix>,
    d: usize,
}

impl DesignSampler {
    pub fn new(setting: Setting, d: usize) -> Result<Self> {
        setting.validate()?;
        let factor = match setting {
            Setting::Iid => None,
            _ => {
                let chol = Cholesky::new(setting.covariance(d)).ok_or_else(|| {
                    Error::NotPositiveDefinite(format!("{setting:?} covariance with d = {d}"))
                })?;
                Some(chol.l())
            }
        };
        Ok(Self { setting, factor, d })
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn factor(&self) -> Matrix {
        self.factor
            .clone()
            .unwrap_or_else(|| Matrix::identity(self.d, self.d))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix {
        let mut xi = Matrix::zeros(n, self.d);
        for i in 0..n {
            for j in 0..self.d {
                xi[(i, j)] = rng.sample(StandardNormal);
            }
        }
        match &self.factor {
            None => xi,
            Some(l) => xi * l.transpose(),
        }
    }
}

pub fn gen_design<R: Rng + ?Sized>(setting: Setting, n: usize, d: usize, rng: &mut R) -> Result<Matrix> {
    Ok(DesignSampler::new(setting, d)?.sample(n, rng))
}

/// `k` coefficients equal to `amplitude` on a uniformly random support,
/// returned in ascending order.
pub fn gen_beta<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<(Vector, Vec<usize>)> {
    if k > d {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds d = {d}")));
    }
    let mut support = sample(rng, d, k).into_vec();
    support.sort_unstable();
    let mut beta = Vector::zeros(d);
    for &j in &support {
        beta[j] = amplitude;
    }
    Ok((beta, support))
}

/// `count` equally spaced amplitudes over `[lo, hi]`.
pub fn amplitude_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorDist {
    Normal,
    /// Student t₅ scaled by `√(3/5)` to unit variance.
    ScaledT5,
}

pub fn gen_errors<R: Rng + ?Sized>(n: usize, dist: ErrorDist, rng: &mut R) -> Vector {
    match dist {
        ErrorDist::Normal => Vector::from_fn(n, |_, _| rng.sample(StandardNormal)),
        ErrorDist::ScaledT5 => {
            let t = StudentT::new(5.0).expect("five degrees of freedom");
            let scale = (3.0f64 / 5.0).sqrt();
            Vector::from_fn(n, |_, _| scale * t.sample(rng))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Plain,
    /// CV-Lasso screening on `(X, y)`, then the pipeline on the survivors.
    TwoStage,
    /// First `⌊n/2⌋` rows for estimation, the rest for the knockoff model.
    DataSplit { c_tilde: f64 },
}

/// Covariance behind the knockoffs in the plain and two-stage variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnockoffCovariance {
    /// Shrunk sample covariance of the design in hand.
    Estimated,
    /// The setting's population covariance.
    Known,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub setting: Setting,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub amplitude: f64,
    pub error_dist: ErrorDist,
    /// Every procedure runs at each level on shared statistics.
    pub alphas: Vec<f64>,
    pub methods: Vec<Procedure>,
    pub reps: usize,
    pub seed: u64,
    pub variant: Variant,
    pub knockoff_covariance: KnockoffCovariance,
    pub cv_folds: usize,
    pub rho2: PenaltyRule,
    pub rho3: PenaltyRule,
    /// Holdout CLIME penalty; `0.5√(ln d/n₂)` when `None`.
    pub rho4: Option<f64>,
    /// Screening penalty for the two-stage variant; cross-validated when `None`.
    pub screen_rho: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            setting: Setting::Iid,
            n: 200,
            d: 100,
            k: 0,
            amplitude: 0.0,
            error_dist: ErrorDist::Normal,
            alphas: vec![0.1],
            methods: vec![Procedure::Bh, Procedure::BonfBh, Procedure::KnockoffFilterPlus],
            reps: 100,
            seed: 0,
            variant: Variant::Plain,
            knockoff_covariance: KnockoffCovariance::Estimated,
            cv_folds: pipeline.cv_folds,
            rho2: pipeline.rho2,
            rho3: pipeline.rho3,
            rho4: None,
            screen_rho: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if self.k > self.d {
            return bad(format!("k = {} exceeds d = {}", self.k, self.d));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be finite and >= 0, got {}", self.amplitude));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return bad(format!("alphas must be non-empty and in (0, 1), got {:?}", self.alphas));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        let n_fit = match self.variant {
            Variant::DataSplit { c_tilde } => {
                if !(c_tilde > 0.0 && c_tilde < 2.0) {
                    return bad(format!("c_tilde must lie in (0, 2), got {c_tilde}"));
                }
                if self.n - self.n / 2 < 2 {
                    return bad(format!("n = {} leaves no usable holdout", self.n));
                }
                self.n / 2
            }
            Variant::TwoStage if self.d < 2 => return bad("two-stage needs d >= 2".into()),
            _ => self.n,
        };
        if self.cv_folds < 2 || n_fit < self.cv_folds {
            return bad(format!(
                "need 2 <= cv_folds <= {n_fit} estimation rows, got {}",
                self.cv_folds
            ));
        }
        Ok(())
    }

    fn pipeline(&self, knockoffs: KnockoffSource) -> PipelineConfig {
        PipelineConfig {
            knockoffs,
            rho1: None,
            cv_folds: self.cv_folds,
            rho2: self.rho2,
            rho3: self.rho3,
            parallel_clime: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Procedure,
    pub alpha: f64,
    /// Rejections in original indices, or why the method failed.
    pub result: std::result::Result<(DecisionResult, ScoreCard), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub truth: Vec<usize>,
    /// Columns the second stage saw, in original indices.
    pub screened: Option<Vec<usize>>,
    pub tests: Option<PairedTests>,
    pub w: Option<Vector>,
    pub sigma_hat: Option<f64>,
    pub outcomes: Vec<MethodOutcome>,
    /// Wall time; not deterministic, so kept apart from the other fields.
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Procedure,
    pub alpha: f64,
    pub mean_fdr: f64,
    pub se_fdr: f64,
    pub mean_power: f64,
    pub se_power: f64,
    pub reps_used: usize,
    /// `(rep, reason)` for each replication left out of the means.
    pub exclusions: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: SimConfig,
    pub summaries: Vec<MethodSummary>,
    pub records: Vec<ReplicationRecord>,
}

fn is_knockoff(m: &Procedure) -> bool {
    matches!(m, Procedure::KnockoffFilter | Procedure::KnockoffFilterPlus)
}

#[derive(Default)]
struct Statistics {
    tests: Option<std::result::Result<PairedTests, String>>,
    w: Option<std::result::Result<Vector, String>>,
    sigma_hat: Option<f64>,
}

fn statistics<R: Rng + ?Sized>(
    x: &Matrix,
    y: &Vector,
    config: &PipelineConfig,
    need_tests: bool,
    need_w: bool,
    rng: &mut R,
) -> std::result::Result<Statistics, String> {
    let design = augment(x, &config.knockoffs, rng).map_err(|e| e.to_string())?;
    let mut out = Statistics::default();
    if need_w {
        out.w = Some(entry_statistics(&design, y).map_err(|e| e.to_string()));
    }
    if need_tests {
        match fit_augmented(design, y, config, rng) {
            Ok((fit, tests)) => {
                out.sigma_hat = Some(fit.sigma_hat);
                out.tests = Some(Ok(tests));
            }
            Err(e) => out.tests = Some(Err(e.to_string())),
        }
    }
    Ok(out)
}

/// Lasso support at the cross-validated (or given) penalty, padded to two
/// columns by marginal correlation.
fn screen<R: Rng + ?Sized>(x: &Matrix, y: &Vector, config: &SimConfig, rng: &mut R) -> Result<Vec<usize>> {
    let mut xc = x.clone();
    center_columns(&mut xc);
    let mut yc = y.clone();
    center_vector(&mut yc);
    let rho = match config.screen_rho {
        Some(r) => r,
        None => cv_lasso_penalty(&xc, &yc, config.cv_folds, &default_grid(&xc, &yc), rng)?,
    };
    let gamma = lasso_fit(&xc, &yc, rho)?.gamma;
    let mut kept: Vec<usize> = (0..gamma.len()).filter(|&j| gamma[j] != 0.0).collect();
    if kept.len() < 2 {
        let score = xc.tr_mul(&yc).map(f64::abs);
        let mut order: Vec<usize> = (0..score.len()).collect();
        order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
        for j in order {
            if kept.len() >= 2 {
                break;
            }
            if !kept.contains(&j) {
                kept.push(j);
            }
        }
        kept.sort_unstable();
    }
    Ok(kept)
}

fn decide(
    method: Procedure,
    alpha: f64,
    stats: &std::result::Result<Statistics, String>,
) -> std::result::Result<DecisionResult, String> {
    let stats = stats.as_ref().map_err(Clone::clone)?;
    let missing = || "statistics were not computed".to_string();
    let run = |r: Result<DecisionResult>| r.map_err(|e| e.to_string());
    if is_knockoff(&method) {
        let w = stats.w.as_ref().ok_or_else(missing)?.as_ref().map_err(Clone::clone)?;
        return run(knockoff_filter(w, alpha, method == Procedure::KnockoffFilterPlus));
    }
    let t = stats.tests.as_ref().ok_or_else(missing)?.as_ref().map_err(Clone::clone)?;
    match method {
        Procedure::Bh => run(bh_procedure(&t.p2, alpha)),
        Procedure::BonfBh => run(bonferroni_bh(&t.p1, &t.p2, alpha)),
        Procedure::BonfBhGeneral(l) => run(bonferroni_bh_general(&t.p1, &t.p2, alpha, l)),
        Procedure::KnockoffFilter | Procedure::KnockoffFilterPlus => unreachable!(),
    }
}

/// One replication on the stream seeded with `seed ⊕ rep`.
pub fn run_replication(config: &SimConfig, rep: usize) -> Result<ReplicationRecord> {
    config.validate()?;
    if rep >= config.reps {
        return Err(Error::InvalidArgument(format!(
            "replication {rep} out of range for reps = {}",
            config.reps
        )));
    }
    let sampler = DesignSampler::new(config.setting, config.d)?;
    Ok(replicate(config, &sampler, rep))
}

fn replicate(config: &SimConfig, sampler: &DesignSampler, rep: usize) -> ReplicationRecord {
    let start = Instant::now();
    let mut rng = replication_stream(config.seed, rep as u64);
    let (n, d) = (config.n, config.d);
    let x = sampler.sample(n, &mut rng);
    let (beta, truth) = gen_beta(d, config.k, config.amplitude, &mut rng).expect("validated k <= d");
    let y = &x * &beta + gen_errors(n, config.error_dist, &mut rng);

    let need_tests = config.methods.iter().any(|m| !is_knockoff(m));
    let need_w = config.methods.iter().any(is_knockoff);
    let known = || -> Result<KnockoffSource> {
        Ok(match config.knockoff_covariance {
            KnockoffCovariance::Estimated => KnockoffSource::Estimated,
            KnockoffCovariance::Known => {
                KnockoffSource::Known(CovarianceSpec::known(sampler.setting().covariance(d))?)
            }
        })
    };

    let mut screened = None;
    let stats = match config.variant {
        Variant::Plain => known()
            .map_err(|e| e.to_string())
            .and_then(|src| statistics(&x, &y, &config.pipeline(src), need_tests, need_w, &mut rng)),
        Variant::TwoStage => screen(&x, &y, config, &mut rng)
            .map_err(|e| format!("screening: {e}"))
            .and_then(|kept| {
                let sub = select_columns(&x, &kept);
                let source = match config.knockoff_covariance {
                    KnockoffCovariance::Estimated => KnockoffSource::Estimated,
                    KnockoffCovariance::Known => {
                        let full = sampler.setting().covariance(d);
                        let sigma = Matrix::from_fn(kept.len(), kept.len(), |a, b| {
                            full[(kept[a], kept[b])]
                        });
                        KnockoffSource::Known(CovarianceSpec::known(sigma).map_err(|e| e.to_string())?)
                    }
                };
                screened = Some(kept);
                statistics(&sub, &y, &config.pipeline(source), need_tests, need_w, &mut rng)
            }),
        Variant::DataSplit { c_tilde } => {
            let n1 = n / 2;
            let x1 = x.rows(0, n1).into_owned();
            let y1 = y.rows(0, n1).into_owned();
            let mut x2 = x.rows(n1, n - n1).into_owned();
            center_columns(&mut x2);
            let rho4 = config.rho4.unwrap_or_else(|| rate_penalty(0.5, d, n - n1));
            build_split_knockoff_model(&x2, c_tilde, rho4)
                .map_err(|e| format!("split knockoff model: {e}"))
                .and_then(|model| {
                    let cfg = config.pipeline(KnockoffSource::Model(model));
                    statistics(&x1, &y1, &cfg, need_tests, need_w, &mut rng)
                })
        }
    };

    let mut outcomes = Vec::with_capacity(config.methods.len() * config.alphas.len());
    for &method in &config.methods {
        for &alpha in &config.alphas {
            let result = decide(method, alpha, &stats).map(|mut decision| {
                if let Some(kept) = &screened {
                    for j in decision.rejected.iter_mut() {
                        *j = kept[*j];
                    }
                }
                let card = score(&decision, &truth);
                (decision, card)
            });
            outcomes.push(MethodOutcome {
                method,
                alpha,
                result,
            });
        }
    }
    let (tests, w, sigma_hat) = match stats {
        Ok(s) => (
            s.tests.and_then(|t| t.ok()),
            s.w.and_then(|w| w.ok()),
            s.sigma_hat,
        ),
        Err(_) => (None, None, None),
    };
    ReplicationRecord {
        rep,
        truth,
        screened,
        tests,
        w,
        sigma_hat,
        outcomes,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// All replications (in parallel), then means and standard errors per
/// method and level.
pub fn run_experiment(config: &SimConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let sampler = DesignSampler::new(config.setting, config.d)?;
    let records: Vec<ReplicationRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| replicate(config, &sampler, rep))
        .collect();
    Ok(ExperimentResult {
        summaries: aggregate(config, &records),
        config: config.clone(),
        records,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Failed replications are excluded method by method and listed.
pub fn aggregate(config: &SimConfig, records: &[ReplicationRecord]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for &method in &config.methods {
        for &alpha in &config.alphas {
            let mut fdp = Vec::new();
            let mut power = Vec::new();
            let mut exclusions = Vec::new();
            for rec in records {
                let found = rec
                    .outcomes
                    .iter()
                    .find(|o| o.method == method && o.alpha == alpha);
                match found.map(|o| &o.result) {
                    Some(Ok((_, card))) => {
                        fdp.push(card.fdp);
                        power.push(card.power);
                    }
                    Some(Err(e)) => exclusions.push((rec.rep, e.clone())),
                    None => exclusions.push((rec.rep, "method not run".into())),
                }
            }
            let (mean_fdr, se_fdr) = mean_se(&fdp);
            let (mean_power, se_power) = mean_se(&power);
            out.push(MethodSummary {
                method,
                alpha,
                mean_fdr,
                se_fdr,
                mean_power,
                se_power,
                reps_used: fdp.len(),
                exclusions,
            });
        }
    }
    out
}
