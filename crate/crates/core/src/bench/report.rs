//! Report files.
//!
//! * `table.csv`: one row per method with mIoU, AUC, SIM, MAE.
//! * `environments.csv`: one row per room type (scatter and radar source).
//! * `areas.csv`, `affordances.csv`: the same columns per group.
//! * `summary.json`: every summary without the raw rows.
//! * `raw.json`: raw rows plus what is needed to rebuild the summaries.
//!
//! CSV files start with `# schema_version` and `# config_hash` comment lines.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::runner::{aggregate, EnvironmentSummary, GroupSummary, MetricsReport, SampleRow, Summary, REPORT_SCHEMA_VERSION};

pub const TABLE_FILE: &str = "table.csv";
pub const ENVIRONMENTS_FILE: &str = "environments.csv";
pub const AREAS_FILE: &str = "areas.csv";
pub const AFFORDANCES_FILE: &str = "affordances.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RAW_FILE: &str = "raw.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unsupported report schema version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentKey {
    pub room_type: String,
    pub area: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub method: String,
    pub environments: Vec<EnvironmentKey>,
    pub rows: Vec<SampleRow>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: u32,
    config_hash: &'a str,
    method: &'a str,
    overall: &'a Summary,
    per_environment: &'a [EnvironmentSummary],
    per_area: &'a [GroupSummary],
    per_affordance: &'a [GroupSummary],
}

pub fn raw_report(report: &MetricsReport) -> RawReport {
    RawReport {
        schema_version: report.schema_version,
        config_hash: report.config_hash.clone(),
        method: report.method.clone(),
        environments: report
            .per_environment
            .iter()
            .map(|e| EnvironmentKey {
                room_type: e.room_type.clone(),
                area: e.area.clone(),
            })
            .collect(),
        rows: report.rows.clone(),
    }
}

/// Rebuilds the full report from raw rows.
pub fn reaggregate(raw: &RawReport) -> MetricsReport {
    let envs: Vec<(String, String)> = raw
        .environments
        .iter()
        .map(|e| (e.room_type.clone(), e.area.clone()))
        .collect();
    aggregate(raw.rows.clone(), &envs, &raw.config_hash, &raw.method)
}

pub fn load_raw(path: &Path) -> Result<RawReport, ReportError> {
    let bytes = fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawReport = serde_json::from_slice(&bytes).map_err(|e| ReportError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if raw.schema_version != REPORT_SCHEMA_VERSION {
        return Err(ReportError::Version(raw.schema_version));
    }
    Ok(raw)
}

fn json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn summary_json(report: &MetricsReport) -> String {
    json(&SummaryFile {
        schema_version: report.schema_version,
        config_hash: &report.config_hash,
        method: &report.method,
        overall: &report.overall,
        per_environment: &report.per_environment,
        per_area: &report.per_area,
        per_affordance: &report.per_affordance,
    })
}

pub fn raw_json(report: &MetricsReport) -> String {
    json(&raw_report(report))
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const METRIC_COLUMNS: [&str; 9] = [
    "samples",
    "evaluated",
    "refused",
    "refusal_rate",
    "miou_pct",
    "auc_pct",
    "sim",
    "mae",
    "auc_degenerate",
];

fn metric_fields(s: &Summary) -> Vec<String> {
    vec![
        s.samples.to_string(),
        s.evaluated.to_string(),
        s.refused.to_string(),
        s.refusal_rate.to_string(),
        num(s.miou_pct),
        num(s.auc_pct),
        num(s.sim),
        num(s.mae),
        s.auc_degenerate.to_string(),
    ]
}

fn csv_text(report: &MetricsReport, head: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = head.iter().copied().chain(METRIC_COLUMNS).collect();
    w.write_record(&header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv");
    format!(
        "# schema_version: {}\n# config_hash: {}\n{body}",
        report.schema_version, report.config_hash
    )
}

/// Method-level row: the overall summary.
pub fn table_csv(report: &MetricsReport) -> String {
    let mut row = vec![report.method.clone()];
    row.extend(metric_fields(&report.overall));
    csv_text(report, &["method"], vec![row])
}

pub fn environments_csv(report: &MetricsReport) -> String {
    let rows = report
        .per_environment
        .iter()
        .map(|e| {
            let mut r = vec![e.room_type.clone(), e.area.clone()];
            r.extend(metric_fields(&e.summary));
            r
        })
        .collect();
    csv_text(report, &["room_type", "area"], rows)
}

fn groups_csv(report: &MetricsReport, name: &str, groups: &[GroupSummary]) -> String {
    let rows = groups
        .iter()
        .map(|g| {
            let mut r = vec![g.group.clone()];
            r.extend(metric_fields(&g.summary));
            r
        })
        .collect();
    csv_text(report, &[name], rows)
}

/// Every report file as `(name, contents)`.
pub fn render(report: &MetricsReport) -> Vec<(&'static str, String)> {
    vec![
        (TABLE_FILE, table_csv(report)),
        (ENVIRONMENTS_FILE, environments_csv(report)),
        (AREAS_FILE, groups_csv(report, "area", &report.per_area)),
        (AFFORDANCES_FILE, groups_csv(report, "affordance", &report.per_affordance)),
        (SUMMARY_FILE, summary_json(report)),
        (RAW_FILE, raw_json(report)),
    ]
}

/// The CSV files only, as produced from a raw report.
pub fn render_csv(report: &MetricsReport) -> Vec<(&'static str, String)> {
    render(report)
        .into_iter()
        .filter(|(name, _)| name.ends_with(".csv"))
        .collect()
}

fn write_all(dir: &Path, files: Vec<(&'static str, String)>) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|source| ReportError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

/// Writes every report file into `dir` and returns their paths.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    write_all(dir, render(report))
}

pub fn emit_csv(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    write_all(dir, render_csv(report))
}
