//! Benchmark loop over every (image, applicable query) sample and the
//! aggregation of per-sample rows.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::area_of;
use super::metrics::{evaluate, MetricParams};
use crate::config::Config;
use crate::decision::{DecisionOutcome, ReasonCode};
use crate::pipeline::{Engine, PipelineError, QueryInput};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark aborted at sample {sample}: {source}")]
    Infrastructure { sample: String, source: PipelineError },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    /// Proceeded and scored against ground truth.
    Evaluated,
    Refused,
    /// Proceeded, but there is no matching ground truth to score against.
    Unscored,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: String,
    pub image_id: String,
    pub query_id: String,
    pub scene_id: String,
    pub room_type: String,
    pub area: String,
    pub action: String,
    pub object: String,
    /// The object is annotated in the image with this affordance and the
    /// action is not a physical act, so a refusal is a miss.
    pub compatible: bool,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_code: Option<ReasonCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Means over evaluated samples of one group. Percent metrics are scaled by
/// 100; AUC skips single-class ground truth and SIM skips massless maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub evaluated: usize,
    pub refused: usize,
    pub unscored: usize,
    pub errors: usize,
    pub refusal_rate: f64,
    pub compatible: usize,
    pub compatible_refused: usize,
    pub compatible_refusal_rate: f64,
    pub auc_samples: usize,
    pub auc_degenerate: usize,
    pub sim_samples: usize,
    pub miou_pct: Option<f64>,
    pub auc_pct: Option<f64>,
    pub sim: Option<f64>,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSummary {
    pub room_type: String,
    pub area: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub method: String,
    /// Sample-weighted mean of the per-environment rows.
    pub overall: Summary,
    pub per_environment: Vec<EnvironmentSummary>,
    pub per_area: Vec<GroupSummary>,
    pub per_affordance: Vec<GroupSummary>,
    pub rows: Vec<SampleRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub metrics: MetricParams,
    pub threads: Option<usize>,
    pub config_hash: String,
    pub method: String,
}

impl BenchOptions {
    pub fn from_config(c: &Config) -> Self {
        Self {
            metrics: c.metrics,
            threads: c.threads,
            config_hash: c.hash(),
            method: c.method(),
        }
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> (usize, Option<f64>) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values {
        n += 1;
        sum += v;
    }
    (n, (n > 0).then(|| sum / n as f64))
}

/// Summary of `rows`, summing in the given order.
pub fn summarize<'a>(rows: impl Iterator<Item = &'a SampleRow> + Clone) -> Summary {
    let count = |f: &dyn Fn(&SampleRow) -> bool| rows.clone().filter(|r| f(r)).count();
    let samples = count(&|_| true);
    let evaluated = count(&|r| r.status == SampleStatus::Evaluated);
    let refused = count(&|r| r.status == SampleStatus::Refused);
    let compatible = count(&|r| r.compatible);
    let compatible_refused = count(&|r| r.compatible && r.status == SampleStatus::Refused);
    let scored = || rows.clone().filter(|r| r.status == SampleStatus::Evaluated);
    let (_, miou) = mean(scored().filter_map(|r| r.miou));
    let (auc_samples, auc) = mean(scored().filter_map(|r| r.auc));
    let (sim_samples, sim) = mean(scored().filter_map(|r| r.sim));
    let (_, mae) = mean(scored().filter_map(|r| r.mae));
    Summary {
        samples,
        evaluated,
        refused,
        unscored: count(&|r| r.status == SampleStatus::Unscored),
        errors: count(&|r| r.status == SampleStatus::Error),
        refusal_rate: rate(refused, samples),
        compatible,
        compatible_refused,
        compatible_refusal_rate: rate(compatible_refused, compatible),
        auc_samples,
        auc_degenerate: evaluated - auc_samples,
        sim_samples,
        miou_pct: miou.map(|v| 100.0 * v),
        auc_pct: auc.map(|v| 100.0 * v),
        sim,
        mae,
    }
}

/// Weighted mean of group values, weights being each group's sample count
/// for that metric.
fn weighted(parts: &[&Summary], value: impl Fn(&Summary) -> Option<f64>, weight: impl Fn(&Summary) -> usize) -> Option<f64> {
    let (mut n, mut sum) = (0usize, 0.0);
    for p in parts {
        if let Some(v) = value(p) {
            let w = weight(p);
            n += w;
            sum += w as f64 * v;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

fn combine(parts: &[&Summary]) -> Summary {
    let total = |f: fn(&Summary) -> usize| parts.iter().map(|p| f(p)).sum::<usize>();
    let samples = total(|s| s.samples);
    let refused = total(|s| s.refused);
    let compatible = total(|s| s.compatible);
    let compatible_refused = total(|s| s.compatible_refused);
    Summary {
        samples,
        evaluated: total(|s| s.evaluated),
        refused,
        unscored: total(|s| s.unscored),
        errors: total(|s| s.errors),
        refusal_rate: rate(refused, samples),
        compatible,
        compatible_refused,
        compatible_refusal_rate: rate(compatible_refused, compatible),
        auc_samples: total(|s| s.auc_samples),
        auc_degenerate: total(|s| s.auc_degenerate),
        sim_samples: total(|s| s.sim_samples),
        miou_pct: weighted(parts, |s| s.miou_pct, |s| s.evaluated),
        auc_pct: weighted(parts, |s| s.auc_pct, |s| s.auc_samples),
        sim: weighted(parts, |s| s.sim, |s| s.sim_samples),
        mae: weighted(parts, |s| s.mae, |s| s.evaluated),
    }
}

/// Builds every summary from raw rows. `environments` lists the room types
/// to report (with their areas) in output order; rows are sorted by sample id
/// first so the result does not depend on input order.
pub fn aggregate(
    mut rows: Vec<SampleRow>,
    environments: &[(String, String)],
    config_hash: &str,
    method: &str,
) -> MetricsReport {
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let per_environment: Vec<EnvironmentSummary> = environments
        .iter()
        .map(|(room, area)| EnvironmentSummary {
            room_type: room.clone(),
            area: area.clone(),
            summary: summarize(rows.iter().filter(|r| &r.room_type == room)),
        })
        .collect();
    let overall = combine(&per_environment.iter().map(|e| &e.summary).collect::<Vec<_>>());

    let mut areas: Vec<&str> = Vec::new();
    for (_, area) in environments {
        if !areas.contains(&area.as_str()) {
            areas.push(area);
        }
    }
    let per_area = areas
        .iter()
        .map(|a| GroupSummary {
            group: a.to_string(),
            summary: summarize(rows.iter().filter(|r| r.area == *a)),
        })
        .collect();

    let mut affordances: Vec<&str> = rows.iter().map(|r| r.action.as_str()).collect();
    affordances.sort_unstable();
    affordances.dedup();
    let per_affordance = affordances
        .iter()
        .map(|a| GroupSummary {
            group: a.to_string(),
            summary: summarize(rows.iter().filter(|r| r.action == *a)),
        })
        .collect();

    MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        method: method.to_string(),
        overall,
        per_environment,
        per_area,
        per_affordance,
        rows,
    }
}

/// Room types present in the engine's manifest paired with their areas.
pub fn environments(engine: &Engine) -> Vec<(String, String)> {
    engine
        .manifest()
        .present_room_types()
        .into_iter()
        .map(|r| (r.to_string(), area_of(r).unwrap_or_default().to_string()))
        .collect()
}

struct Sample<'a> {
    image: &'a super::manifest::ImageRecord,
    query: &'a super::manifest::QueryRecord,
    room_type: &'a str,
    area: &'a str,
}

fn evaluate_sample(engine: &Engine, s: &Sample<'_>, params: &MetricParams) -> Result<SampleRow, PipelineError> {
    let q = s.query;
    let annotation = s.image.annotations.iter().find(|a| a.label == q.object);
    let physical = engine.manifest().non_affordance_actions.contains(&q.action);
    let mut row = SampleRow {
        sample_id: format!("{}:{}", s.image.image_id, q.query_id),
        image_id: s.image.image_id.clone(),
        query_id: q.query_id.clone(),
        scene_id: s.image.scene_id.clone(),
        room_type: s.room_type.to_string(),
        area: s.area.to_string(),
        action: q.action.clone(),
        object: q.object.clone(),
        compatible: !physical && annotation.is_some_and(|a| a.affordances.contains(&q.action)),
        status: SampleStatus::Error,
        reason_code: None,
        label: None,
        cloud_id: None,
        miou: None,
        auc: None,
        sim: None,
        mae: None,
        note: None,
    };

    let image = match engine.image_input(&s.image.image_id) {
        Ok(i) => i,
        Err(e) => {
            row.note = Some(e.to_string());
            return Ok(row);
        }
    };
    let input = QueryInput {
        image,
        text: q.text.clone(),
        query_cloud: None,
    };
    let result = match engine.run(&input) {
        Ok(r) => r,
        Err(e) if e.is_backend_failure() => return Err(e),
        Err(e) => {
            row.note = Some(e.to_string());
            return Ok(row);
        }
    };
    let label = match &result.decision {
        DecisionOutcome::Refuse { reason_code, .. } => {
            row.status = SampleStatus::Refused;
            row.reason_code = Some(*reason_code);
            return Ok(row);
        }
        DecisionOutcome::Proceed { label } => label.clone(),
    };
    let pred = result.map.expect("proceed carries a map");
    row.label = Some(label.clone());
    row.cloud_id = Some(pred.cloud_id().to_string());
    row.status = SampleStatus::Unscored;

    let Some(ann) = annotation.filter(|a| a.label == label) else {
        row.note = Some(format!("proceeded on '{label}', which is not the annotated query object"));
        return Ok(row);
    };
    if pred.cloud_id() != ann.cloud_id || pred.affordance() != q.action {
        row.note = Some(format!(
            "prediction covers {}/{}, ground truth is {}/{}",
            pred.cloud_id(),
            pred.affordance(),
            ann.cloud_id,
            q.action
        ));
        return Ok(row);
    }
    let Some(gt) = engine.store().get(&ann.cloud_id).ok().and_then(|r| r.gt_map(&q.action)) else {
        row.note = Some(format!("no ground-truth '{}' map for {}", q.action, ann.cloud_id));
        return Ok(row);
    };
    match evaluate(pred.scores(), gt.scores(), params) {
        Ok(m) => {
            row.status = SampleStatus::Evaluated;
            row.miou = Some(m.miou);
            row.auc = m.auc;
            row.sim = m.sim;
            row.mae = Some(m.mae);
        }
        Err(e) => {
            row.status = SampleStatus::Error;
            row.note = Some(e.to_string());
        }
    }
    Ok(row)
}

/// Evaluates every sample of the engine's manifest. Samples run in
/// parallel; the report is independent of scheduling.
pub fn run_benchmark(engine: &Engine, opts: &BenchOptions) -> Result<MetricsReport, BenchError> {
    let m = engine.manifest();
    let scenes = m.scenes_by_id();
    let queries = m.queries_by_id();
    let mut samples = Vec::new();
    for image in &m.images {
        let scene = scenes[image.scene_id.as_str()];
        for qid in &image.applicable_query_ids {
            samples.push(Sample {
                image,
                query: queries[qid.as_str()],
                room_type: &scene.room_type,
                area: &scene.area,
            });
        }
    }
    let work = || -> Result<Vec<SampleRow>, BenchError> {
        samples
            .par_iter()
            .map(|s| {
                evaluate_sample(engine, s, &opts.metrics).map_err(|source| BenchError::Infrastructure {
                    sample: format!("{}:{}", s.image.image_id, s.query.query_id),
                    source,
                })
            })
            .collect()
    };
    let rows = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::ThreadPool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(aggregate(rows, &environments(engine), &opts.config_hash, &opts.method))
}

/// Per-group breakdown keyed by group name, for lookups in tests and tools.
pub fn by_group(groups: &[GroupSummary]) -> BTreeMap<&str, &Summary> {
    groups.iter().map(|g| (g.group.as_str(), &g.summary)).collect()
}
