//! Argument parsing, configuration resolution and command dispatch for the
//! `knockoff-fdr` binary.
//!
//! Every option can come from a flag or from a TOML file passed with
//! `--config`; flags win over the file and the file wins over defaults.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize};

use knockoff_fdr::experiments::{
    amplitude_grid, run_experiment, ErrorDist, KnockoffCovariance, Setting, SimConfig, Variant,
};
use knockoff_fdr::inference::{augment, KnockoffSource, PenaltyRule, PipelineConfig};
use knockoff_fdr::io::{
    emit_analysis, emit_results, ingest_csv, ingest_design_csv, run_analysis, write_matrix_csv,
    Preprocessing,
};
use knockoff_fdr::rng::stream;
use knockoff_fdr::testing::Procedure;

pub const THREADS_ENV: &str = "KNOCKOFF_FDR_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Help or version text; not a failure.
    Info(String),
    Usage(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Info(s) => f.write_str(s),
            CliError::Usage(s) => write!(f, "usage error: {s}"),
            CliError::Compute(s) => write!(f, "error: {s}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn compute(e: impl fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "knockoff-fdr", version, about = "Knockoff-augmented FDR control for sparse linear models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Monte Carlo FDR and power study.
    Simulate(SimulateArgs),
    /// Run the pipeline on a CSV design and response.
    Analyze(AnalyzeArgs),
    /// Write a knockoff copy of a CSV design.
    Knockoffs(KnockoffsArgs),
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(Option::<OneOrMany>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    }))
}

#[derive(Args, Deserialize, Debug, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// TOML file with any of the options below (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// iid, ar1 or block.
    #[arg(long)]
    setting: Option<String>,
    /// AR(1) coefficient or within-block correlation.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// Run this many equally spaced amplitudes over [0.1, 0.5] instead.
    #[arg(long)]
    amplitude_grid: Option<usize>,
    /// normal or t5.
    #[arg(long)]
    error: Option<String>,
    /// One or more comma-separated levels.
    #[arg(long, value_delimiter = ',')]
    #[serde(deserialize_with = "one_or_many")]
    alpha: Option<Vec<f64>>,
    /// Comma-separated: bh, bonf_bh, bonf_bh_general, knockoff, knockoff_plus.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Screening level for bonf_bh_general.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// plain, two-stage or data-split.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    c_tilde: Option<f64>,
    /// estimated or known.
    #[arg(long)]
    knockoff_covariance: Option<String>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Fixed CLIME penalty.
    #[arg(long)]
    rho2: Option<f64>,
    /// Fixed scaled-Lasso penalty.
    #[arg(long)]
    rho3: Option<f64>,
    /// Holdout CLIME penalty for data-split.
    #[arg(long)]
    rho4: Option<f64>,
    /// Fixed screening penalty for two-stage.
    #[arg(long)]
    screen_rho: Option<f64>,
}

#[derive(Args, Deserialize, Debug, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct AnalyzeArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// bh, bonf_bh or bonf_bh_general.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dedup_columns: Option<bool>,
    #[arg(long)]
    min_column_sum: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    rho3: Option<f64>,
}

#[derive(Args, Deserialize, Debug, Default, Clone)]
#[serde(default, deny_unknown_fields)]
struct KnockoffsArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dedup_columns: Option<bool>,
    #[arg(long)]
    min_column_sum: Option<usize>,
}

/// Fully resolved `simulate` options, echoed to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub out: PathBuf,
    pub setting: String,
    pub rho: Option<f64>,
    pub block_size: Option<usize>,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub amplitudes: Vec<f64>,
    pub error: String,
    pub alpha: Vec<f64>,
    pub methods: Vec<String>,
    pub lambda: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub variant: String,
    pub c_tilde: Option<f64>,
    pub knockoff_covariance: String,
    pub cv_folds: usize,
    pub rho1: String,
    pub rho2: String,
    pub rho3: String,
    pub rho4: String,
    pub screen_rho: String,
    /// One experiment per amplitude.
    #[serde(skip)]
    pub runs: Vec<SimConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeConfig {
    pub x: PathBuf,
    pub y: PathBuf,
    pub out: PathBuf,
    pub alpha: f64,
    pub method: String,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub dedup_columns: bool,
    pub min_column_sum: usize,
    pub cv_folds: usize,
    pub knockoffs: String,
    pub rho1: String,
    pub rho2: String,
    pub rho3: String,
    #[serde(skip)]
    pub procedure: Procedure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnockoffsConfig {
    pub x: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub dedup_columns: bool,
    pub min_column_sum: usize,
    pub knockoffs: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Simulate(SimulateConfig),
    Analyze(AnalyzeConfig),
    Knockoffs(KnockoffsConfig),
}

fn read_file<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
}

fn required<T>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| usage(format!("missing required option `{key}`")))
}

fn penalty_label(rule: PenaltyRule) -> String {
    match rule {
        PenaltyRule::Rate(c) => format!("{c}*sqrt(ln(2d)/n)"),
        PenaltyRule::Quantile(k0) => format!("sqrt(2)*quantile(1-{k0}/(2d))/sqrt(n)"),
        PenaltyRule::Fixed(v) => format!("{v}"),
    }
}

fn penalty(fixed: Option<f64>, default: PenaltyRule, key: &str) -> Result<PenaltyRule, CliError> {
    match fixed {
        Some(v) if v > 0.0 && v.is_finite() => Ok(PenaltyRule::Fixed(v)),
        Some(v) => Err(usage(format!("`{key}` must be positive, got {v}"))),
        None => Ok(default),
    }
}

pub fn parse_method(name: &str, lambda: Option<f64>) -> Result<Procedure, CliError> {
    match name.trim() {
        "bh" => Ok(Procedure::Bh),
        "bonf_bh" => Ok(Procedure::BonfBh),
        "bonf_bh_general" => Ok(Procedure::BonfBhGeneral(required(lambda, "lambda")?)),
        "knockoff" => Ok(Procedure::KnockoffFilter),
        "knockoff_plus" => Ok(Procedure::KnockoffFilterPlus),
        other => Err(usage(format!("unknown method `{other}`"))),
    }
}

macro_rules! merge {
    ($flags:expr, $file:expr; $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.clone(); } )*
    };
}

fn resolve_simulate(mut a: SimulateArgs) -> Result<SimulateConfig, CliError> {
    let file: SimulateArgs = read_file(a.config.as_deref())?;
    merge!(a, file; out, setting, rho, block_size, n, d, k, amplitude, amplitude_grid, error,
        alpha, methods, lambda, reps, seed, variant, c_tilde, knockoff_covariance, cv_folds,
        rho2, rho3, rho4, screen_rho);
    let base = SimConfig::default();
    let setting_name = a.setting.clone().unwrap_or_else(|| "iid".into());
    let (setting, rho, block_size) = match setting_name.as_str() {
        "iid" => (Setting::Iid, None, None),
        "ar1" => {
            let r = a.rho.unwrap_or(0.4);
            (Setting::Ar1(r), Some(r), None)
        }
        "block" => {
            let r = a.rho.unwrap_or(0.2);
            let size = a.block_size.unwrap_or(20);
            (Setting::Block { rho: r, size }, Some(r), Some(size))
        }
        other => return Err(usage(format!("unknown setting `{other}`"))),
    };
    let error = a.error.clone().unwrap_or_else(|| "normal".into());
    let error_dist = match error.as_str() {
        "normal" => ErrorDist::Normal,
        "t5" => ErrorDist::ScaledT5,
        other => return Err(usage(format!("unknown error distribution `{other}`"))),
    };
    let variant_name = a.variant.clone().unwrap_or_else(|| "plain".into());
    let (variant, c_tilde) = match variant_name.as_str() {
        "plain" => (Variant::Plain, None),
        "two-stage" => (Variant::TwoStage, None),
        "data-split" => {
            let c = a.c_tilde.unwrap_or(1.0);
            (Variant::DataSplit { c_tilde: c }, Some(c))
        }
        other => return Err(usage(format!("unknown variant `{other}`"))),
    };
    let kc_name = a.knockoff_covariance.clone().unwrap_or_else(|| "estimated".into());
    let knockoff_covariance = match kc_name.as_str() {
        "estimated" => KnockoffCovariance::Estimated,
        "known" => KnockoffCovariance::Known,
        other => return Err(usage(format!("unknown knockoff covariance `{other}`"))),
    };
    let amplitudes = match (a.amplitude, a.amplitude_grid) {
        (Some(_), Some(_)) => {
            return Err(usage("`amplitude` and `amplitude_grid` are mutually exclusive"))
        }
        (_, Some(0)) => return Err(usage("`amplitude_grid` must be positive")),
        (_, Some(count)) => amplitude_grid(0.1, 0.5, count),
        (amp, None) => vec![amp.unwrap_or(base.amplitude)],
    };
    let alpha = required(a.alpha.clone(), "alpha")?;
    let method_names = a.methods.clone().unwrap_or_else(|| {
        base.methods
            .iter()
            .map(|m| m.name())
            .collect()
    });
    let methods = method_names
        .iter()
        .map(|m| parse_method(m, a.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    let rho2 = penalty(a.rho2, base.rho2, "rho2")?;
    let rho3 = penalty(a.rho3, base.rho3, "rho3")?;
    let template = SimConfig {
        setting,
        n: a.n.unwrap_or(base.n),
        d: a.d.unwrap_or(base.d),
        k: a.k.unwrap_or(base.k),
        amplitude: amplitudes[0],
        error_dist,
        alphas: alpha.clone(),
        methods,
        reps: a.reps.unwrap_or(base.reps),
        seed: a.seed.unwrap_or(base.seed),
        variant,
        knockoff_covariance,
        cv_folds: a.cv_folds.unwrap_or(base.cv_folds),
        rho2,
        rho3,
        rho4: a.rho4,
        screen_rho: a.screen_rho,
    };
    let runs: Vec<SimConfig> = amplitudes
        .iter()
        .map(|&amplitude| SimConfig {
            amplitude,
            ..template.clone()
        })
        .collect();
    for run in &runs {
        run.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(SimulateConfig {
        out: a.out.clone().unwrap_or_else(|| "results".into()),
        setting: setting_name,
        rho,
        block_size,
        n: template.n,
        d: template.d,
        k: template.k,
        amplitudes,
        error,
        alpha,
        methods: template.methods.iter().map(|m| m.name()).collect(),
        lambda: a.lambda,
        reps: template.reps,
        seed: template.seed,
        variant: variant_name,
        c_tilde,
        knockoff_covariance: kc_name,
        cv_folds: template.cv_folds,
        rho1: format!("{}-fold cross-validation over 100 log-spaced values in [0.001, 1]*lambda_max", template.cv_folds),
        rho2: penalty_label(rho2),
        rho3: penalty_label(rho3),
        rho4: a
            .rho4
            .map(|v| v.to_string())
            .unwrap_or_else(|| "0.5*sqrt(ln(d)/n2)".into()),
        screen_rho: a
            .screen_rho
            .map(|v| v.to_string())
            .unwrap_or_else(|| "cross-validated".into()),
        runs,
    })
}

fn preprocessing(dedup: Option<bool>, min_sum: Option<usize>) -> Preprocessing {
    let base = Preprocessing::default();
    Preprocessing {
        dedup_columns: dedup.unwrap_or(base.dedup_columns),
        min_column_sum: min_sum.unwrap_or(base.min_column_sum),
    }
}

fn resolve_analyze(mut a: AnalyzeArgs) -> Result<AnalyzeConfig, CliError> {
    let file: AnalyzeArgs = read_file(a.config.as_deref())?;
    merge!(a, file; x, y, out, alpha, method, lambda, seed, dedup_columns, min_column_sum,
        cv_folds, rho2, rho3);
    let base = PipelineConfig::default();
    let alpha = required(a.alpha, "alpha")?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("`alpha` must lie in (0, 1), got {alpha}")));
    }
    let method = a.method.clone().unwrap_or_else(|| "bonf_bh".into());
    let procedure = parse_method(&method, a.lambda)?;
    if matches!(procedure, Procedure::KnockoffFilter | Procedure::KnockoffFilterPlus) {
        return Err(usage("`analyze` supports bh, bonf_bh and bonf_bh_general"));
    }
    let prep = preprocessing(a.dedup_columns, a.min_column_sum);
    let cv_folds = a.cv_folds.unwrap_or(base.cv_folds);
    if cv_folds < 2 {
        return Err(usage("`cv_folds` must be at least 2"));
    }
    Ok(AnalyzeConfig {
        x: required(a.x.clone(), "x")?,
        y: required(a.y.clone(), "y")?,
        out: a.out.clone().unwrap_or_else(|| "results".into()),
        alpha,
        method: procedure.name(),
        lambda: a.lambda,
        seed: a.seed.unwrap_or(0),
        dedup_columns: prep.dedup_columns,
        min_column_sum: prep.min_column_sum,
        cv_folds,
        knockoffs: "equicorrelated, shrunk sample covariance".into(),
        rho1: format!("{cv_folds}-fold cross-validation over 100 log-spaced values in [0.001, 1]*lambda_max"),
        rho2: penalty_label(penalty(a.rho2, base.rho2, "rho2")?),
        rho3: penalty_label(penalty(a.rho3, base.rho3, "rho3")?),
        procedure,
    })
}

fn resolve_knockoffs(mut a: KnockoffsArgs) -> Result<KnockoffsConfig, CliError> {
    let file: KnockoffsArgs = read_file(a.config.as_deref())?;
    merge!(a, file; x, out, seed, dedup_columns, min_column_sum);
    let prep = preprocessing(a.dedup_columns, a.min_column_sum);
    Ok(KnockoffsConfig {
        x: required(a.x.clone(), "x")?,
        out: a.out.clone().unwrap_or_else(|| "results".into()),
        seed: a.seed.unwrap_or(0),
        dedup_columns: prep.dedup_columns,
        min_column_sum: prep.min_column_sum,
        knockoffs: "equicorrelated, shrunk sample covariance".into(),
    })
}

/// Resolves `argv` (including the program name) into a run configuration.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
            _ => usage(e.to_string()),
        }
    })?;
    match cli.command {
        Cmd::Simulate(a) => resolve_simulate(a).map(RunConfig::Simulate),
        Cmd::Analyze(a) => resolve_analyze(a).map(RunConfig::Analyze),
        Cmd::Knockoffs(a) => resolve_knockoffs(a).map(RunConfig::Knockoffs),
    }
}

fn manifest<T: Serialize>(command: &str, config: &T, extra: serde_json::Value) -> String {
    let mut value = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    if let serde_json::Value::Object(extra) = extra {
        value.as_object_mut().expect("object").extend(extra);
    }
    let mut text = serde_json::to_string_pretty(&value).expect("manifest serializes");
    text.push('\n');
    text
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Executes a resolved configuration.
pub fn execute(config: &RunConfig) -> Result<(), CliError> {
    if let Some(n) = threads_from_env()? {
        // a pool already installed (e.g. by an earlier call) is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match config {
        RunConfig::Simulate(c) => {
            for (i, run) in c.runs.iter().enumerate() {
                let result = run_experiment(run).map_err(compute)?;
                let outdir = if c.runs.len() == 1 {
                    c.out.clone()
                } else {
                    c.out.join(format!("amplitude_{i}"))
                };
                let text = manifest(
                    "simulate",
                    c,
                    serde_json::json!({ "amplitude": run.amplitude }),
                );
                emit_results(&result, &outdir, &text).map_err(compute)?;
            }
            Ok(())
        }
        RunConfig::Analyze(c) => {
            let prep = Preprocessing {
                dedup_columns: c.dedup_columns,
                min_column_sum: c.min_column_sum,
            };
            let data = ingest_csv(&c.x, &c.y, prep).map_err(compute)?;
            let base = PipelineConfig::default();
            let pipeline = PipelineConfig {
                cv_folds: c.cv_folds,
                rho2: penalty(parse_fixed(&c.rho2), base.rho2, "rho2")?,
                rho3: penalty(parse_fixed(&c.rho3), base.rho3, "rho3")?,
                ..base
            };
            let mut rng = stream(c.seed);
            let analysis =
                run_analysis(&data, c.procedure, c.alpha, &pipeline, &mut rng).map_err(compute)?;
            let extra = serde_json::json!({
                "n": data.x.nrows(),
                "d": data.x.ncols(),
                "merged_columns": data.merged,
                "dropped_columns": data.dropped,
                "rho1_selected": analysis.rho1,
                "sigma_hat": analysis.sigma_hat,
                "rejections": analysis.decision.r_tilde,
            });
            emit_analysis(&data, &analysis, &c.out, &manifest("analyze", c, extra)).map_err(compute)
        }
        RunConfig::Knockoffs(c) => {
            let prep = Preprocessing {
                dedup_columns: c.dedup_columns,
                min_column_sum: c.min_column_sum,
            };
            let data = ingest_design_csv(&c.x, prep).map_err(compute)?;
            let mut rng = stream(c.seed);
            let design = augment(&data.x, &KnockoffSource::Estimated, &mut rng).map_err(compute)?;
            let d = design.d;
            let knockoffs = design.z.columns(d, d).into_owned();
            std::fs::create_dir_all(&c.out).map_err(compute)?;
            let header: Vec<String> = match &data.names {
                Some(names) => names.iter().map(|s| format!("{s}_knockoff")).collect(),
                None => data.columns.iter().map(|j| format!("x{j}_knockoff")).collect(),
            };
            write_matrix_csv(&c.out.join("knockoffs.csv"), &knockoffs, Some(&header))
                .map_err(compute)?;
            let extra = serde_json::json!({
                "n": data.x.nrows(),
                "d": d,
                "columns": data.columns,
                "merged_columns": data.merged,
                "dropped_columns": data.dropped,
            });
            std::fs::write(c.out.join("manifest.json"), manifest("knockoffs", c, extra))
                .map_err(compute)
        }
    }
}

/// Resolved penalty labels are either a number or a rule description.
fn parse_fixed(label: &str) -> Option<f64> {
    label.parse().ok()
}

/// Parses, executes and reports; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_config(argv).and_then(|c| execute(&c)) {
        Ok(()) => 0,
        Err(CliError::Info(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
