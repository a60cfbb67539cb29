//! CSV ingestion for real data and serialization of results.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so every value
//! parses back to the same `f64`.

use std::fs::{self, File};
use std::path::Path;

use rand::Rng;

use crate::error::Error;
use crate::experiments::ExperimentResult;
use crate::inference::{fit_pipeline, PairedTests, PipelineConfig};
use crate::linalg::{center_columns, center_vector, Matrix, Vector};
use crate::testing::{bh_procedure, bonferroni_bh, bonferroni_bh_general, DecisionResult, Procedure};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preprocessing {
    pub dedup_columns: bool,
    /// Binary columns with fewer nonzero entries are dropped.
    pub min_column_sum: usize,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            dedup_columns: true,
            min_column_sum: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Centered design.
    pub x: Matrix,
    /// Centered response.
    pub y: Vector,
    /// Original (0-based) index of each kept column.
    pub columns: Vec<usize>,
    /// Header names of the kept columns, if the file had a header.
    pub names: Option<Vec<String>>,
    /// `(kept, dropped)` original indices of identical columns.
    pub merged: Vec<(usize, usize)>,
    /// Dropped as too rare (binary input) or constant.
    pub dropped: Vec<usize>,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let parsed: Vec<std::result::Result<f64, usize>> = record
            .iter()
            .enumerate()
            .map(|(c, field)| field.trim().parse::<f64>().map_err(|_| c))
            .collect();
        if i == 0 && parsed.iter().any(|r| r.is_err()) {
            header = Some(record.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::ShapeMismatch(format!(
                "{}: row {} has {} fields, expected {w}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(w);
        for (c, v) in parsed.into_iter().enumerate() {
            match v {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: i + 1,
                        col: c + 1,
                        message: format!("{}: '{}' is not a finite number", path.display(), &record[c]),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} has no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

/// Reads `X` and `y`, drops duplicate, constant and (for 0/1 data) rare
/// columns, then centers.
pub fn ingest_csv(x_path: &Path, y_path: &Path, prep: Preprocessing) -> Result<Dataset> {
    let xt = read_table(x_path)?;
    let yt = read_table(y_path)?;
    if yt.rows[0].len() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "response file must have one column, found {}",
            yt.rows[0].len()
        )));
    }
    if yt.rows.len() != xt.rows.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows but response has {}",
            xt.rows.len(),
            yt.rows.len()
        )));
    }
    let mut y = Vector::from_fn(yt.rows.len(), |i, _| yt.rows[i][0]);
    center_vector(&mut y);
    preprocess(xt, y, prep)
}

/// [`ingest_csv`] without a response; `y` is left at zero.
pub fn ingest_design_csv(x_path: &Path, prep: Preprocessing) -> Result<Dataset> {
    let xt = read_table(x_path)?;
    let n = xt.rows.len();
    preprocess(xt, Vector::zeros(n), prep)
}

fn preprocess(xt: Table, y: Vector, prep: Preprocessing) -> Result<Dataset> {
    let (n, d) = (xt.rows.len(), xt.rows[0].len());
    if let Some(h) = &xt.header {
        if h.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "header has {} names for {d} columns",
                h.len()
            )));
        }
    }
    let raw = Matrix::from_fn(n, d, |i, j| xt.rows[i][j]);
    let binary = raw.iter().all(|&v| v == 0.0 || v == 1.0);

    let mut kept: Vec<usize> = Vec::new();
    let mut merged = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..d {
        let col = raw.column(j);
        let constant = col.iter().all(|&v| v == col[0]);
        let rare = binary && col.iter().filter(|&&v| v != 0.0).count() < prep.min_column_sum;
        if constant || rare {
            dropped.push(j);
            continue;
        }
        if prep.dedup_columns {
            if let Some(&first) = kept.iter().find(|&&k| raw.column(k) == col) {
                merged.push((first, j));
                continue;
            }
        }
        kept.push(j);
    }
    if kept.is_empty() {
        return Err(Error::DegenerateInput("preprocessing removed every column".into()));
    }
    let mut x = Matrix::from_fn(n, kept.len(), |i, j| raw[(i, kept[j])]);
    center_columns(&mut x);
    Ok(Dataset {
        x,
        y,
        names: xt
            .header
            .map(|h| kept.iter().map(|&j| h[j].clone()).collect()),
        columns: kept,
        merged,
        dropped,
    })
}

pub fn write_matrix_csv(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    let mut w = writer(path)?;
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| fmt_f64(v)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `x` and `y` in the format [`ingest_csv`] reads.
pub fn write_dataset(data: &Dataset, x_path: &Path, y_path: &Path) -> Result<()> {
    write_matrix_csv(x_path, &data.x, data.names.as_deref())?;
    write_matrix_csv(y_path, &Matrix::from_column_slice(data.y.len(), 1, data.y.as_slice()), None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub tests: PairedTests,
    pub decision: DecisionResult,
    pub sigma_hat: f64,
    pub rho1: f64,
}

/// Full pipeline on an ingested dataset followed by one p-value procedure.
pub fn run_analysis<R: Rng + ?Sized>(
    data: &Dataset,
    procedure: Procedure,
    alpha: f64,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<Analysis> {
    let (fit, tests) = fit_pipeline(&data.x, &data.y, config, rng)?;
    let decision = match procedure {
        Procedure::Bh => bh_procedure(&tests.p2, alpha)?,
        Procedure::BonfBh => bonferroni_bh(&tests.p1, &tests.p2, alpha)?,
        Procedure::BonfBhGeneral(l) => bonferroni_bh_general(&tests.p1, &tests.p2, alpha, l)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "analysis supports the p-value procedures only, got {}",
                other.name()
            )))
        }
    };
    Ok(Analysis {
        tests,
        decision,
        sigma_hat: fit.sigma_hat,
        rho1: fit.rho1,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

fn prepare(outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir).map_err(|e| Error::Io(format!("{}: {e}", outdir.display())))
}

/// `summary.csv`, `replications.csv`, `exclusions.csv`, `timings.csv` and
/// `manifest.json`. Everything but `timings.csv` is a pure function of the
/// configuration and seed.
pub fn emit_results(result: &ExperimentResult, outdir: &Path, manifest_json: &str) -> Result<()> {
    prepare(outdir)?;
    let mut w = writer(&outdir.join("summary.csv"))?;
    w.write_record(["method", "alpha", "mean_fdr", "se_fdr", "mean_power", "se_power", "reps_used"])
        .map_err(csv_err)?;
    for s in &result.summaries {
        w.write_record([
            s.method.name(),
            fmt_f64(s.alpha),
            fmt_f64(s.mean_fdr),
            fmt_f64(s.se_fdr),
            fmt_f64(s.mean_power),
            fmt_f64(s.se_power),
            s.reps_used.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = writer(&outdir.join("replications.csv"))?;
    w.write_record(["rep", "method", "alpha", "fdp", "power", "r_tilde", "status"])
        .map_err(csv_err)?;
    let mut x = writer(&outdir.join("exclusions.csv"))?;
    x.write_record(["rep", "method", "alpha", "reason"]).map_err(csv_err)?;
    for rec in &result.records {
        for o in &rec.outcomes {
            let (method, alpha) = (o.method.name(), fmt_f64(o.alpha));
            match &o.result {
                Ok((decision, card)) => w.write_record([
                    rec.rep.to_string(),
                    method,
                    alpha,
                    fmt_f64(card.fdp),
                    fmt_f64(card.power),
                    decision.r_tilde.to_string(),
                    "ok".into(),
                ]),
                Err(reason) => {
                    x.write_record([rec.rep.to_string(), method.clone(), alpha.clone(), reason.clone()])
                        .map_err(csv_err)?;
                    w.write_record([rec.rep.to_string(), method, alpha, "".into(), "".into(), "".into(), "error".into()])
                }
            }
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    x.flush()?;

    let mut w = writer(&outdir.join("timings.csv"))?;
    w.write_record(["rep", "runtime_ms"]).map_err(csv_err)?;
    for rec in &result.records {
        w.write_record([rec.rep.to_string(), format!("{:.3}", rec.runtime_ms)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    fs::write(outdir.join("manifest.json"), manifest_json)?;
    Ok(())
}

/// `discoveries.csv` (one row per kept column) and `manifest.json`.
pub fn emit_analysis(data: &Dataset, analysis: &Analysis, outdir: &Path, manifest_json: &str) -> Result<()> {
    prepare(outdir)?;
    let mut w = writer(&outdir.join("discoveries.csv"))?;
    w.write_record(["column", "name", "t1", "t2", "p1", "p2", "rejected"])
        .map_err(csv_err)?;
    let t = &analysis.tests;
    for (j, &col) in data.columns.iter().enumerate() {
        let name = match &data.names {
            Some(names) => names[j].clone(),
            None => format!("x{col}"),
        };
        w.write_record([
            col.to_string(),
            name,
            fmt_f64(t.t1[j]),
            fmt_f64(t.t2[j]),
            fmt_f64(t.p1[j]),
            fmt_f64(t.p2[j]),
            analysis.decision.rejected.contains(&j).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    fs::write(outdir.join("manifest.json"), manifest_json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files(dir: &Path, x: &str, y: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let (xp, yp) = (dir.join("x.csv"), dir.join("y.csv"));
        fs::write(&xp, x).unwrap();
        fs::write(&yp, y).unwrap();
        (xp, yp)
    }

    #[test]
    fn small_headerless_file() {
        let dir = tempfile::tempdir().unwrap();
        let (xp, yp) = files(dir.path(), "1,0\n0,1\n1,1\n", "1\n2\n3\n");
        let prep = Preprocessing { min_column_sum: 1, ..Default::default() };
        let data = ingest_csv(&xp, &yp, prep).unwrap();
        assert_eq!(data.x.shape(), (3, 2));
        assert_eq!(data.columns, vec![0, 1]);
        assert!((data.x[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(data.y.as_slice(), &[-1.0, 0.0, 1.0]);
        assert!(data.names.is_none());
    }

    #[test]
    fn duplicates_and_rare_columns() {
        let dir = tempfile::tempdir().unwrap();
        // columns 2 and 5 (1-based) identical; column 4 appears once
        let x = "a,b,c,d,e\n1,0,1,0,0\n0,1,0,0,1\n1,1,0,1,1\n0,1,1,0,1\n1,0,1,0,0\n";
        let (xp, yp) = files(dir.path(), x, "1\n0\n2\n1\n0\n");
        let data = ingest_csv(&xp, &yp, Preprocessing::default()).unwrap();
        assert_eq!(data.columns, vec![0, 1, 2]);
        assert_eq!(data.merged, vec![(1, 4)]);
        assert_eq!(data.dropped, vec![3]);
        assert_eq!(data.names.unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn shape_and_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (xp, yp) = files(dir.path(), "1,0\n0,1\n1,1\n", "1\n2\n");
        assert!(matches!(ingest_csv(&xp, &yp, Preprocessing::default()), Err(Error::ShapeMismatch(_))));
        let (xp, yp) = files(dir.path(), "1,0\n0,x\n1,1\n", "1\n2\n3\n");
        assert!(matches!(
            ingest_csv(&xp, &yp, Preprocessing::default()),
            Err(Error::Parse { row: 2, col: 2, .. })
        ));
        let (xp, yp) = files(dir.path(), "1,0\n0\n1,1\n", "1\n2\n3\n");
        assert!(matches!(ingest_csv(&xp, &yp, Preprocessing::default()), Err(Error::ShapeMismatch(_))));
    }
}
