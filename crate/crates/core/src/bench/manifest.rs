//! Benchmark manifest: one JSON document tying scenes, images, annotations,
//! queries, canonical clouds and vocabularies together.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{CompatibilityTable, TableError, DEFAULT_NON_AFFORDANCE_ACTIONS};
use crate::query::QueryVocabulary;
use crate::types::BBox;
use crate::vlm::Tokenizer;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub const SOURCES: [&str; 6] = [
    "Houzz",
    "Pinterest",
    "Shutterstock",
    "Instagram",
    "Archdaily",
    "Designboom",
];

/// Areas and the room types grouped under each.
pub const AREAS: [(&str, &[&str]); 6] = [
    ("Living", &["living room", "family room", "game room"]),
    ("Dining & Kitchen", &["dining room", "kitchen", "pantry"]),
    ("Sleeping", &["master bedroom", "bedroom", "guest bedroom"]),
    ("Work & Study", &["home office", "study room", "children's room"]),
    ("Storage", &["storage room", "walk-in closet", "basement", "attic"]),
    ("Utility", &["bathroom", "laundry room", "garage", "home theater"]),
];

pub fn area_of(room_type: &str) -> Option<&'static str> {
    AREAS
        .iter()
        .find(|(_, rooms)| rooms.contains(&room_type))
        .map(|(area, _)| *area)
}

/// All room types in taxonomy order.
pub fn room_types() -> impl Iterator<Item = &'static str> {
    AREAS.iter().flat_map(|(_, rooms)| rooms.iter().copied())
}

pub fn default_aliases() -> BTreeMap<String, String> {
    [("pour water", "pour"), ("lay down", "lay"), ("sit on", "sit")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn default_non_affordance() -> BTreeSet<String> {
    DEFAULT_NON_AFFORDANCE_ACTIONS.iter().map(|s| s.to_string()).collect()
}

fn default_schema_version() -> u32 {
    MANIFEST_SCHEMA_VERSION
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported manifest schema version {0}")]
    Version(u32),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_id: String,
    pub room_type: String,
    pub area: String,
}

/// The box is kept raw so validation can report it with a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub bbox: [f64; 4],
    pub cloud_id: String,
    pub affordances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub scene_id: String,
    pub source: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub annotations: Vec<Annotation>,
    pub applicable_query_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub action: String,
    pub object: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudRef {
    pub cloud_id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Vocab {
    pub objects: Vec<String>,
    pub affordances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub scenes: Vec<Scene>,
    pub images: Vec<ImageRecord>,
    pub queries: Vec<QueryRecord>,
    pub clouds: Vec<CloudRef>,
    pub object_action_map: BTreeMap<String, BTreeSet<String>>,
    #[serde(default = "default_non_affordance")]
    pub non_affordance_actions: BTreeSet<String>,
    #[serde(default = "default_aliases")]
    pub action_aliases: BTreeMap<String, String>,
    /// Per-label box used by the toy grounding backend.
    #[serde(default)]
    pub label_regions: BTreeMap<String, [f64; 4]>,
    pub vocab: Vocab,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Self::parse(text, "<manifest>")
    }

    fn parse(text: &str, path: &str) -> Result<Self, ManifestError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| ManifestError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(ManifestError::Version(m.schema_version));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        fs::write(path, self.to_json()).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == id)
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == id)
    }

    pub fn scenes_by_id(&self) -> BTreeMap<&str, &Scene> {
        self.scenes.iter().map(|s| (s.scene_id.as_str(), s)).collect()
    }

    pub fn queries_by_id(&self) -> BTreeMap<&str, &QueryRecord> {
        self.queries.iter().map(|q| (q.query_id.as_str(), q)).collect()
    }

    pub fn affordance_set(&self) -> BTreeSet<String> {
        self.vocab.affordances.iter().cloned().collect()
    }

    /// Parser vocabulary: affordances plus non-affordance actions, objects,
    /// and the alias table.
    pub fn query_vocabulary(&self) -> QueryVocabulary {
        QueryVocabulary::new(
            self.vocab
                .affordances
                .iter()
                .chain(&self.non_affordance_actions)
                .cloned(),
            self.vocab.objects.iter().cloned(),
            self.action_aliases.clone(),
        )
    }

    pub fn compatibility_table(&self) -> Result<CompatibilityTable, TableError> {
        CompatibilityTable::new(
            self.object_action_map.clone(),
            self.non_affordance_actions.clone(),
            &self.affordance_set(),
        )
    }

    /// Tokenizer over every word the vocabularies and query texts use.
    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::from_phrases(
            self.vocab
                .objects
                .iter()
                .chain(&self.vocab.affordances)
                .chain(&self.non_affordance_actions)
                .chain(self.action_aliases.keys())
                .chain(self.queries.iter().map(|q| &q.text)),
        )
    }

    /// Annotated `(label, box)` pairs per image, skipping invalid boxes.
    pub fn oracle_annotations(&self) -> BTreeMap<String, Vec<(String, BBox)>> {
        self.images
            .iter()
            .map(|img| {
                let anns = img
                    .annotations
                    .iter()
                    .filter_map(|a| BBox::new(a.bbox).ok().map(|b| (a.label.clone(), b)))
                    .collect();
                (img.image_id.clone(), anns)
            })
            .collect()
    }

    pub fn regions(&self) -> BTreeMap<String, BBox> {
        self.label_regions
            .iter()
            .filter_map(|(k, b)| BBox::new(*b).ok().map(|b| (k.clone(), b)))
            .collect()
    }

    /// Room types present in the manifest, in taxonomy order.
    pub fn present_room_types(&self) -> Vec<&str> {
        let present: BTreeSet<&str> = self.scenes.iter().map(|s| s.room_type.as_str()).collect();
        room_types().filter(|r| present.contains(r)).collect()
    }
}
