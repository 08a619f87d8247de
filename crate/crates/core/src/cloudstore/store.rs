//! Label-indexed store of canonical clouds and their ground-truth maps.
//!
//! On-disk layout under a store root:
//!
//! ```text
//! index.json                  {"schema_version": 1, "records": [{id, label, source, affordances}]}
//! clouds/<id>.afpc            binary point cloud
//! maps/<id>.<affordance>.json {"schema_version": 1, "cloud_id", "affordance", "scores": [...]}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloudio::{self, CloudIoError};
use crate::geometry::PointCloud;
use crate::types::{AffordanceMap, TypeError};

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no cloud stored for label '{0}'")]
    LabelNotInStore(String),
    #[error("unknown record id '{0}'")]
    UnknownId(String),
    #[error("duplicate record id '{0}'")]
    DuplicateId(String),
    #[error("record {id}: {source}")]
    BadMap { id: String, source: TypeError },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("unsupported store schema version {0}")]
    Version(u32),
    #[error("{path}: {source}")]
    Cloud { path: PathBuf, source: CloudIoError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudRecord {
    pub label: String,
    pub cloud: PointCloud,
    /// Ground truth per affordance, keyed by affordance label.
    pub gt_maps: BTreeMap<String, AffordanceMap>,
    pub source: String,
}

impl CloudRecord {
    pub fn new(
        label: impl Into<String>,
        cloud: PointCloud,
        maps: Vec<AffordanceMap>,
        source: impl Into<String>,
    ) -> Result<Self, StoreError> {
        let mut gt_maps = BTreeMap::new();
        for m in maps {
            m.check_against(&cloud).map_err(|source| StoreError::BadMap {
                id: cloud.id().to_string(),
                source,
            })?;
            gt_maps.insert(m.affordance().to_string(), m);
        }
        Ok(Self {
            label: label.into(),
            cloud,
            gt_maps,
            source: source.into(),
        })
    }

    pub fn id(&self) -> &str {
        self.cloud.id()
    }

    pub fn gt_map(&self, affordance: &str) -> Option<&AffordanceMap> {
        self.gt_maps.get(affordance)
    }
}

/// Immutable label → records index. Label lists are sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreIndex {
    by_label: BTreeMap<String, Vec<String>>,
    records: BTreeMap<String, CloudRecord>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    schema_version: u32,
    records: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    label: String,
    source: String,
    affordances: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    schema_version: u32,
    #[serde(flatten)]
    map: AffordanceMap,
}

impl StoreIndex {
    pub fn from_records<I: IntoIterator<Item = CloudRecord>>(records: I) -> Result<Self, StoreError> {
        let mut index = Self::default();
        for r in records {
            let id = r.id().to_string();
            if index.records.contains_key(&id) {
                return Err(StoreError::DuplicateId(id));
            }
            index.by_label.entry(r.label.clone()).or_default().push(id.clone());
            index.records.insert(id, r);
        }
        for ids in index.by_label.values_mut() {
            ids.sort();
        }
        Ok(index)
    }

    /// First record for the exact label, by lexicographic id.
    pub fn retrieve(&self, label: &str) -> Result<&CloudRecord, StoreError> {
        self.by_label
            .get(label)
            .and_then(|ids| ids.first())
            .map(|id| &self.records[id])
            .ok_or_else(|| StoreError::LabelNotInStore(label.to_string()))
    }

    pub fn get(&self, id: &str) -> Result<&CloudRecord, StoreError> {
        self.records
            .get(id)
            .ok_or_else(|| StoreError::UnknownId(id.to_string()))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.by_label.keys().map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &CloudRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn save(&self, root: &Path) -> Result<(), StoreError> {
        let clouds = root.join("clouds");
        let maps = root.join("maps");
        fs::create_dir_all(&clouds).map_err(io_err(&clouds))?;
        fs::create_dir_all(&maps).map_err(io_err(&maps))?;
        let mut entries = Vec::new();
        for r in self.records.values() {
            let cpath = clouds.join(format!("{}.afpc", r.id()));
            cloudio::write_afpc(&cpath, &r.cloud).map_err(|source| StoreError::Cloud {
                path: cpath.clone(),
                source,
            })?;
            for (aff, m) in &r.gt_maps {
                let mpath = maps.join(format!("{}.{}.json", r.id(), aff));
                let body = MapFile {
                    schema_version: STORE_SCHEMA_VERSION,
                    map: m.clone(),
                };
                fs::write(&mpath, serde_json::to_vec(&body).expect("map serializes"))
                    .map_err(io_err(&mpath))?;
            }
            entries.push(IndexEntry {
                id: r.id().to_string(),
                label: r.label.clone(),
                source: r.source.clone(),
                affordances: r.gt_maps.keys().cloned().collect(),
            });
        }
        let ipath = root.join("index.json");
        let file = IndexFile {
            schema_version: STORE_SCHEMA_VERSION,
            records: entries,
        };
        fs::write(&ipath, serde_json::to_vec_pretty(&file).expect("index serializes"))
            .map_err(io_err(&ipath))
    }

    /// Loads a store written by [`StoreIndex::save`] or produced by [`ingest_dir`].
    pub fn load(root: &Path) -> Result<Self, StoreError> {
        let ipath = root.join("index.json");
        let text = fs::read(&ipath).map_err(io_err(&ipath))?;
        let file: IndexFile = serde_json::from_slice(&text).map_err(|e| StoreError::Format {
            path: ipath.clone(),
            message: e.to_string(),
        })?;
        if file.schema_version != STORE_SCHEMA_VERSION {
            return Err(StoreError::Version(file.schema_version));
        }
        let mut records = Vec::with_capacity(file.records.len());
        for e in file.records {
            let cloud = read_cloud_file(&root.join("clouds").join(format!("{}.afpc", e.id)), &e.id)?;
            let mut maps = Vec::new();
            for aff in &e.affordances {
                maps.push(read_map(&root.join("maps").join(format!("{}.{}.json", e.id, aff)))?);
            }
            records.push(CloudRecord::new(e.label, cloud, maps, e.source)?);
        }
        Self::from_records(records)
    }
}

fn read_cloud_file(path: &Path, id: &str) -> Result<PointCloud, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    cloudio::decode_cloud(id, &bytes).map_err(|source| StoreError::Cloud {
        path: path.to_path_buf(),
        source,
    })
}

fn read_map(path: &Path) -> Result<AffordanceMap, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let file: MapFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if file.schema_version != STORE_SCHEMA_VERSION {
        return Err(StoreError::Version(file.schema_version));
    }
    Ok(file.map)
}

/// Default label rule for ids without an explicit mapping: the text before
/// the first `__`, or the whole id.
pub fn label_from_id(id: &str) -> String {
    id.split("__").next().unwrap_or(id).to_string()
}

/// Builds an index from `clouds/*.{afpc,xyz}` and `maps/<id>.<affordance>.json`
/// under `root`, writes `index.json`, and returns the loaded index.
/// `labels` overrides [`label_from_id`] for known ids.
pub fn ingest_dir(root: &Path, labels: &BTreeMap<String, String>) -> Result<StoreIndex, StoreError> {
    let cdir = root.join("clouds");
    let mut cloud_files: Vec<PathBuf> = fs::read_dir(&cdir)
        .map_err(io_err(&cdir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("afpc" | "xyz")))
        .collect();
    cloud_files.sort();

    let mdir = root.join("maps");
    let mut map_files: BTreeMap<String, BTreeSet<PathBuf>> = BTreeMap::new();
    if mdir.is_dir() {
        for e in fs::read_dir(&mdir).map_err(io_err(&mdir))? {
            let p = e.map_err(io_err(&mdir))?.path();
            if p.extension().and_then(|e| e.to_str()) == Some("json") {
                let map = read_map(&p)?;
                map_files.entry(map.cloud_id().to_string()).or_default().insert(p);
            }
        }
    }

    let mut records = Vec::new();
    for path in cloud_files {
        let id = path.file_stem().unwrap().to_string_lossy().into_owned();
        let mut cloud = read_cloud_file(&path, &id)?;
        if path.extension().and_then(|e| e.to_str()) == Some("xyz") {
            // normalise storage to the binary format
            let afpc = cdir.join(format!("{id}.afpc"));
            cloudio::write_afpc(&afpc, &cloud).map_err(|source| StoreError::Cloud {
                path: afpc.clone(),
                source,
            })?;
            cloud = cloud.with_id(id.clone());
        }
        let mut maps = Vec::new();
        for p in map_files.get(&id).into_iter().flatten() {
            maps.push(read_map(p)?);
        }
        let label = labels.get(&id).cloned().unwrap_or_else(|| label_from_id(&id));
        records.push(CloudRecord::new(label, cloud, maps, format!("ingest:{}", path.file_name().unwrap().to_string_lossy()))?);
    }
    let index = StoreIndex::from_records(records)?;
    let ipath = root.join("index.json");
    let file = IndexFile {
        schema_version: STORE_SCHEMA_VERSION,
        records: index
            .records()
            .map(|r| IndexEntry {
                id: r.id().to_string(),
                label: r.label.clone(),
                source: r.source.clone(),
                affordances: r.gt_maps.keys().cloned().collect(),
            })
            .collect(),
    };
    fs::write(&ipath, serde_json::to_vec_pretty(&file).expect("index serializes")).map_err(io_err(&ipath))?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, label: &str) -> CloudRecord {
        let cloud = PointCloud::new(id, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let map = AffordanceMap::for_cloud(&cloud, "sit", vec![0.2, 0.9]).unwrap();
        CloudRecord::new(label, cloud, vec![map], "test").unwrap()
    }

    #[test]
    fn retrieve_uses_lexicographic_tie_break() {
        let idx = StoreIndex::from_records([record("s2", "sofa"), record("s1", "sofa")]).unwrap();
        assert_eq!(idx.retrieve("sofa").unwrap().id(), "s1");
        assert!(matches!(idx.retrieve("unicorn"), Err(StoreError::LabelNotInStore(_))));
    }

    #[test]
    fn rejects_duplicates_and_foreign_maps() {
        assert!(matches!(
            StoreIndex::from_records([record("a", "x"), record("a", "y")]),
            Err(StoreError::DuplicateId(_))
        ));
        let cloud = PointCloud::new("a", vec![[0.0; 3]]).unwrap();
        let foreign = AffordanceMap::new("b", "sit", vec![0.5]).unwrap();
        assert!(matches!(
            CloudRecord::new("x", cloud, vec![foreign], "t"),
            Err(StoreError::BadMap { .. })
        ));
    }

    #[test]
    fn save_load_and_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let idx = StoreIndex::from_records([record("sofa__1", "sofa"), record("vase__1", "vase")]).unwrap();
        idx.save(dir.path()).unwrap();
        let back = StoreIndex::load(dir.path()).unwrap();
        assert_eq!(back, idx);

        fs::remove_file(dir.path().join("index.json")).unwrap();
        fs::write(dir.path().join("clouds/bed__7.xyz"), "0 0 0\n1 1 1\n").unwrap();
        let ingested = ingest_dir(dir.path(), &BTreeMap::new()).unwrap();
        assert_eq!(ingested.labels().collect::<Vec<_>>(), vec!["bed", "sofa", "vase"]);
        assert_eq!(ingested.retrieve("sofa").unwrap().gt_maps.len(), 1);
        let reloaded = StoreIndex::load(dir.path()).unwrap();
        assert_eq!(reloaded.len(), 3);
    }
}
