//! Referential and taxonomy checks plus dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::manifest::{area_of, Manifest, MANIFEST_SCHEMA_VERSION, SOURCES};
use crate::types::BBox;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

/// Every violated invariant, in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationErrors {
    pub errors: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.errors.len())?;
        for e in &self.errors {
            write!(f, "\n  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

impl ValidationErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.errors.iter().map(|e| e.path.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub scenes: usize,
    pub objects: usize,
    pub affordances: usize,
    pub queries: usize,
    pub images: usize,
    pub sources: usize,
}

/// Two-decimal rounded means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub images_per_scene: f64,
    pub objects_per_scene: f64,
    pub affordances_per_scene: f64,
    pub queries_per_scene: f64,
    pub objects_per_image: f64,
    pub affordances_per_image: f64,
    pub queries_per_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCount {
    pub source: String,
    pub count: usize,
    /// Share of all images, percent, two decimals.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub totals: Totals,
    pub averages: Averages,
    /// In canonical source order, zero counts included.
    pub sources: Vec<SourceCount>,
    pub objects_per_image: Extremes,
    pub affordances_per_image: Extremes,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The shared JSON rendering of a stats report (CLI and service use it).
pub fn stats_json(report: &StatsReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("stats serialize");
    s.push('\n');
    s
}

/// Statistics over raw records; does not check consistency.
///
/// Per-scene counts are distinct annotation labels, distinct annotated
/// affordances and distinct applicable query ids over the scene's images.
/// Per-image counts are annotations, the summed affordance lists and the
/// applicable query list length.
pub fn compute_stats(m: &Manifest) -> StatsReport {
    let mut scene_objects: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut scene_affs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut scene_queries: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut source_counts: BTreeMap<&str, usize> = BTreeMap::new();
    let (mut n_ann, mut n_aff, mut n_q) = (0usize, 0usize, 0usize);
    let mut obj_ext: Option<Extremes> = None;
    let mut aff_ext: Option<Extremes> = None;

    for img in &m.images {
        let sid = img.scene_id.as_str();
        let objs = scene_objects.entry(sid).or_default();
        let affs = scene_affs.entry(sid).or_default();
        let mut img_affs = 0;
        for a in &img.annotations {
            objs.insert(&a.label);
            affs.extend(a.affordances.iter().map(String::as_str));
            img_affs += a.affordances.len();
        }
        scene_queries
            .entry(sid)
            .or_default()
            .extend(img.applicable_query_ids.iter().map(String::as_str));
        *source_counts.entry(img.source.as_str()).or_default() += 1;
        n_ann += img.annotations.len();
        n_aff += img_affs;
        n_q += img.applicable_query_ids.len();
        for (ext, v) in [(&mut obj_ext, img.annotations.len()), (&mut aff_ext, img_affs)] {
            let e = ext.get_or_insert(Extremes { min: v, max: v });
            e.min = e.min.min(v);
            e.max = e.max.max(v);
        }
    }

    let n_scenes = m.scenes.len();
    let n_images = m.images.len();
    let per_scene = |map: &BTreeMap<&str, BTreeSet<&str>>| {
        let total: usize = m
            .scenes
            .iter()
            .map(|s| map.get(s.scene_id.as_str()).map_or(0, BTreeSet::len))
            .sum();
        round2(ratio(total, n_scenes))
    };

    StatsReport {
        totals: Totals {
            scenes: n_scenes,
            objects: m.vocab.objects.len(),
            affordances: m.vocab.affordances.len(),
            queries: m.queries.len(),
            images: n_images,
            sources: source_counts.len(),
        },
        averages: Averages {
            images_per_scene: round2(ratio(n_images, n_scenes)),
            objects_per_scene: per_scene(&scene_objects),
            affordances_per_scene: per_scene(&scene_affs),
            queries_per_scene: per_scene(&scene_queries),
            objects_per_image: round2(ratio(n_ann, n_images)),
            affordances_per_image: round2(ratio(n_aff, n_images)),
            queries_per_image: round2(ratio(n_q, n_images)),
        },
        sources: SOURCES
            .iter()
            .map(|s| {
                let count = source_counts.get(s).copied().unwrap_or(0);
                SourceCount {
                    source: s.to_string(),
                    count,
                    percent: round2(100.0 * ratio(count, n_images)),
                }
            })
            .collect(),
        objects_per_image: obj_ext.unwrap_or(Extremes { min: 0, max: 0 }),
        affordances_per_image: aff_ext.unwrap_or(Extremes { min: 0, max: 0 }),
    }
}

struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationIssue {
            path: path.into(),
            message: message.into(),
        });
    }
}

fn duplicates<'a, I: IntoIterator<Item = &'a str>>(ids: I) -> Vec<(usize, &'a str)> {
    let mut seen = BTreeSet::new();
    ids.into_iter()
        .enumerate()
        .filter(|(_, id)| !seen.insert(*id))
        .collect()
}

/// Checks every referential, taxonomy and vocabulary invariant and returns
/// the statistics when none is violated.
pub fn validate_manifest(m: &Manifest) -> Result<StatsReport, ValidationErrors> {
    let mut out = Issues(Vec::new());
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        out.push("schema_version", format!("unsupported version {}", m.schema_version));
    }

    let objects: BTreeSet<&str> = m.vocab.objects.iter().map(String::as_str).collect();
    let affordances: BTreeSet<&str> = m.vocab.affordances.iter().map(String::as_str).collect();
    for (i, dup) in duplicates(m.vocab.objects.iter().map(String::as_str)) {
        out.push(format!("vocab.objects[{i}]"), format!("duplicate object label '{dup}'"));
    }
    for (i, dup) in duplicates(m.vocab.affordances.iter().map(String::as_str)) {
        out.push(format!("vocab.affordances[{i}]"), format!("duplicate affordance '{dup}'"));
    }

    for (obj, acts) in &m.object_action_map {
        if !objects.contains(obj.as_str()) {
            out.push(format!("object_action_map.{obj}"), format!("object '{obj}' not in vocabulary"));
        }
        for a in acts {
            if !affordances.contains(a.as_str()) {
                out.push(
                    format!("object_action_map.{obj}"),
                    format!("affordance '{a}' not in vocabulary"),
                );
            }
        }
    }
    if m.object_action_map.values().all(BTreeSet::is_empty) {
        out.push("object_action_map", "table has no object-action pairs");
    }
    for (phrase, target) in &m.action_aliases {
        if !affordances.contains(target.as_str()) && !m.non_affordance_actions.contains(target) {
            out.push(
                format!("action_aliases.{phrase}"),
                format!("alias target '{target}' is not a known action"),
            );
        }
    }
    for (label, b) in &m.label_regions {
        if !objects.contains(label.as_str()) {
            out.push(format!("label_regions.{label}"), format!("object '{label}' not in vocabulary"));
        }
        if let Err(e) = BBox::new(*b) {
            out.push(format!("label_regions.{label}"), e.to_string());
        }
    }

    let mut scene_ids = BTreeSet::new();
    for (i, s) in m.scenes.iter().enumerate() {
        let p = format!("scenes[{i}]");
        if !scene_ids.insert(s.scene_id.as_str()) {
            out.push(format!("{p}.scene_id"), format!("duplicate scene_id '{}'", s.scene_id));
        }
        match area_of(&s.room_type) {
            None => out.push(format!("{p}.room_type"), format!("unknown room type '{}'", s.room_type)),
            Some(area) if area != s.area => out.push(
                format!("{p}.area"),
                format!("room type '{}' belongs to area '{area}', not '{}'", s.room_type, s.area),
            ),
            Some(_) => {}
        }
    }

    let mut cloud_labels: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, c) in m.clouds.iter().enumerate() {
        let p = format!("clouds[{i}]");
        if cloud_labels.insert(&c.cloud_id, &c.label).is_some() {
            out.push(format!("{p}.cloud_id"), format!("duplicate cloud_id '{}'", c.cloud_id));
        }
        if !objects.contains(c.label.as_str()) {
            out.push(format!("{p}.label"), format!("object '{}' not in vocabulary", c.label));
        }
    }

    let mut query_ids = BTreeSet::new();
    for (i, q) in m.queries.iter().enumerate() {
        let p = format!("queries[{i}]");
        if !query_ids.insert(q.query_id.as_str()) {
            out.push(format!("{p}.query_id"), format!("duplicate query_id '{}'", q.query_id));
        }
        if !affordances.contains(q.action.as_str()) && !m.non_affordance_actions.contains(&q.action) {
            out.push(format!("{p}.action"), format!("action '{}' not in vocabulary", q.action));
        }
        if !objects.contains(q.object.as_str()) {
            out.push(format!("{p}.object"), format!("object '{}' not in vocabulary", q.object));
        }
        if q.text.trim().is_empty() {
            out.push(format!("{p}.text"), "empty query text");
        }
    }

    let mut image_ids = BTreeSet::new();
    for (i, img) in m.images.iter().enumerate() {
        let p = format!("images[{i}]");
        if !image_ids.insert(img.image_id.as_str()) {
            out.push(format!("{p}.image_id"), format!("duplicate image_id '{}'", img.image_id));
        }
        if !scene_ids.contains(img.scene_id.as_str()) {
            out.push(
                format!("{p}.scene_id"),
                format!("image '{}' references unknown scene '{}'", img.image_id, img.scene_id),
            );
        }
        if !SOURCES.contains(&img.source.as_str()) {
            out.push(format!("{p}.source"), format!("unknown source '{}'", img.source));
        }
        if img.path.trim().is_empty() {
            out.push(format!("{p}.path"), "empty image path");
        }
        if img.annotations.is_empty() {
            out.push(format!("{p}.annotations"), "image has no annotations");
        }
        for (j, a) in img.annotations.iter().enumerate() {
            let ap = format!("{p}.annotations[{j}]");
            let known_label = objects.contains(a.label.as_str());
            if !known_label {
                out.push(format!("{ap}.label"), format!("object '{}' not in vocabulary", a.label));
            }
            if let Err(e) = BBox::new(a.bbox) {
                out.push(format!("{ap}.bbox"), e.to_string());
            }
            match cloud_labels.get(a.cloud_id.as_str()) {
                None => out.push(
                    format!("{ap}.cloud_id"),
                    format!("image '{}' references unknown cloud '{}'", img.image_id, a.cloud_id),
                ),
                Some(l) if *l != a.label => out.push(
                    format!("{ap}.cloud_id"),
                    format!("cloud '{}' has label '{l}', annotation says '{}'", a.cloud_id, a.label),
                ),
                Some(_) => {}
            }
            if a.affordances.is_empty() {
                out.push(format!("{ap}.affordances"), "annotation lists no affordances");
            }
            let supported = m.object_action_map.get(&a.label);
            for (k, aff) in a.affordances.iter().enumerate() {
                let fp = || format!("{ap}.affordances[{k}]");
                if !affordances.contains(aff.as_str()) {
                    out.push(fp(), format!("affordance '{aff}' not in vocabulary"));
                } else if known_label && !supported.is_some_and(|s| s.contains(aff)) {
                    out.push(fp(), format!("'{}' does not support '{aff}' in object_action_map", a.label));
                }
            }
            for (k, dup) in duplicates(a.affordances.iter().map(String::as_str)) {
                out.push(format!("{ap}.affordances[{k}]"), format!("duplicate affordance '{dup}'"));
            }
        }
        for (k, qid) in img.applicable_query_ids.iter().enumerate() {
            if !query_ids.contains(qid.as_str()) {
                out.push(
                    format!("{p}.applicable_query_ids[{k}]"),
                    format!("image '{}' references unknown query '{qid}'", img.image_id),
                );
            }
        }
        for (k, dup) in duplicates(img.applicable_query_ids.iter().map(String::as_str)) {
            out.push(format!("{p}.applicable_query_ids[{k}]"), format!("duplicate query id '{dup}'"));
        }
    }

    if out.0.is_empty() {
        Ok(compute_stats(m))
    } else {
        Err(ValidationErrors { errors: out.0 })
    }
}
