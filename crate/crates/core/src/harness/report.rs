//! Aggregation of replication records into table rows, and report I/O.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::run::{refinement_accepted, RepRecord};
use crate::error::{Error, Result};

/// Share of failed replications above which a run-level warning is raised.
pub const FAILURE_WARN_FRACTION: f64 = 0.05;

pub const CSV_HEADER: [&str; 16] = [
    "sweep_key",
    "sweep_value",
    "method",
    "p",
    "n",
    "vartheta",
    "theta",
    "r",
    "q",
    "mean_hamming",
    "stderr",
    "mean_fp",
    "mean_fn",
    "ratio_to_sp",
    "reps",
    "wall_ms",
];

/// One table cell: a sweep point and a method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep_idx: usize,
    pub sweep_key: String,
    pub sweep_value: String,
    pub method: Method,
    pub p: usize,
    pub n: usize,
    pub vartheta: f64,
    pub theta: f64,
    pub r: f64,
    pub q: f64,
    pub tau: f64,
    pub mean_hamming: f64,
    /// Standard error of `mean_hamming` (sample standard deviation over `sqrt(reps)`).
    pub stderr: f64,
    pub mean_fp: f64,
    pub mean_fn: f64,
    /// `mean_hamming / (p eps)`; absent when no signals are expected.
    pub ratio_to_sp: Option<f64>,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    /// Total wall time of the method over all replications.
    pub wall_ms: f64,
    pub mean_survivors: f64,
    /// Fraction of replications whose first refinement round passed the ratio test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_accept_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_refine_rounds: Option<f64>,
    pub oversize_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub package: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub replications: usize,
    pub failures: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
}

/// The exact CSV columns of a row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub sweep_key: String,
    pub sweep_value: String,
    pub method: Method,
    pub p: usize,
    pub n: usize,
    pub vartheta: f64,
    pub theta: f64,
    pub r: f64,
    pub q: f64,
    pub mean_hamming: f64,
    pub stderr: f64,
    pub mean_fp: f64,
    pub mean_fn: f64,
    pub ratio_to_sp: Option<f64>,
    pub reps: usize,
    pub wall_ms: f64,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        CsvRow {
            sweep_key: r.sweep_key.clone(),
            sweep_value: r.sweep_value.clone(),
            method: r.method,
            p: r.p,
            n: r.n,
            vartheta: r.vartheta,
            theta: r.theta,
            r: r.r,
            q: r.q,
            mean_hamming: r.mean_hamming,
            stderr: r.stderr,
            mean_fp: r.mean_fp,
            mean_fn: r.mean_fn,
            ratio_to_sp: r.ratio_to_sp,
            reps: r.reps,
            wall_ms: r.wall_ms,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mean and its standard error; the error is 0 for a single value. `v` is nonempty.
fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

/// Reduces records into one row per (sweep point, method). The reduction sorts
/// its input first, so any ordering or batching of `records` gives the same report.
pub fn aggregate(cfg: &ExperimentConfig, records: &[RepRecord]) -> Result<ExperimentReport> {
    let points = cfg.sweep_points()?;
    let mut sorted: Vec<&RepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (a.sweep_idx, a.method, a.rep).cmp(&(b.sweep_idx, b.method, b.rep)));
    let mut groups: BTreeMap<(usize, Method), Vec<&RepRecord>> = BTreeMap::new();
    for rec in sorted {
        if rec.sweep_idx >= points.len() {
            return Err(Error::invalid(format!("record for unknown sweep point {}", rec.sweep_idx)));
        }
        groups.entry((rec.sweep_idx, rec.method)).or_default().push(rec);
    }

    let mut rows = Vec::new();
    let mut failures_total = 0;
    let mut warnings = Vec::new();
    for ((idx, method), recs) in groups {
        let point = &points[idx];
        let fits: Vec<_> = recs.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
        let failures = recs.len() - fits.len();
        failures_total += failures;
        if failures > 0 {
            let first = recs.iter().find_map(|r| r.outcome.as_ref().err()).expect("a failure exists");
            let msg = format!(
                "{} at {}={}: {failures} of {} replications failed (first: {first})",
                method.as_str(),
                point.key,
                point.value,
                recs.len()
            );
            if failures as f64 > FAILURE_WARN_FRACTION * recs.len() as f64 {
                warn!("{msg}");
            }
            warnings.push(msg);
        }
        if fits.is_empty() {
            let msg = format!("{} at {}={}: no successful replication", method.as_str(), point.key, point.value);
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let h: Vec<f64> = fits.iter().map(|f| f.hamming.total as f64).collect();
        let fp: Vec<f64> = fits.iter().map(|f| f.hamming.false_pos as f64).collect();
        let fneg: Vec<f64> = fits.iter().map(|f| f.hamming.false_neg as f64).collect();
        let surv: Vec<f64> = fits.iter().map(|f| f.survivors as f64).collect();
        let (mean_hamming, stderr) = mean_stderr(&h);
        let ratios: Vec<f64> = fits.iter().filter_map(|f| f.first_refine_ratio).collect();
        let is_refined = method == Method::UpsRefined;
        rows.push(ReportRow {
            sweep_idx: idx,
            sweep_key: point.key.clone(),
            sweep_value: point.value.clone(),
            method,
            p: point.p,
            n: point.n,
            vartheta: point.params.vartheta,
            theta: point.params.theta,
            r: point.params.r,
            q: point.params.q,
            tau: point.tau,
            mean_hamming,
            stderr,
            mean_fp: mean(&fp),
            mean_fn: mean(&fneg),
            ratio_to_sp: (point.s_expected() > 0.0).then(|| mean_hamming / point.s_expected()),
            reps: fits.len(),
            failures,
            wall_ms: fits.iter().map(|f| f.wall_ms).sum(),
            mean_survivors: mean(&surv),
            refine_accept_rate: is_refined.then(|| {
                ratios.iter().filter(|&&r| refinement_accepted(r)).count() as f64 / fits.len() as f64
            }),
            mean_refine_rounds: is_refined.then(|| mean(&fits.iter().map(|f| f.refinement_rounds as f64).collect::<Vec<_>>())),
            oversize_components: fits.iter().map(|f| f.oversize_components).sum(),
        });
    }
    let replications = records.len();
    if replications > 0 && failures_total as f64 > FAILURE_WARN_FRACTION * replications as f64 {
        let msg = format!("{failures_total} of {replications} method replications failed");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ExperimentReport {
        rows,
        provenance: Provenance {
            package: env!("CARGO_PKG_NAME").to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            replications,
            failures: failures_total,
            warnings,
        },
    })
}

impl ExperimentReport {
    pub fn row(&self, sweep_idx: usize, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.sweep_idx == sweep_idx && r.method == method)
    }

    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    match format {
        ReportFormat::Csv => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_csv(report, file).map_err(|e| Error::csv(path, e))
        }
        ReportFormat::Json => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            serde_json::to_writer_pretty(file, report).map_err(|e| Error::json(path, e))
        }
    }
}

/// Writes the header and one line per row.
pub fn write_csv<W: std::io::Write>(report: &ExperimentReport, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in &report.rows {
        w.serialize(CsvRow::from(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("unexpected header {:?}", header),
        });
    }
    rdr.deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| Error::csv(path, e))
}

pub fn read_json(path: &Path) -> Result<ExperimentReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::json(path, e))
}
