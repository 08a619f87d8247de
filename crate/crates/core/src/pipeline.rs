//! End-to-end query engine: parse, ground, decide, retrieve, register and
//! segment.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::affordseg::{SegmentError, SegmentationMode};
use crate::bench::manifest::{Manifest, ManifestError};
use crate::bench::validate::{validate_manifest, StatsReport, ValidationErrors};
use crate::cloudstore::{icp_register, IcpParams, RegistrationError, StoreError, StoreIndex};
use crate::config::{BackendKind, Config};
use crate::decision::{
    decide, decide_unparsed, CompatibilityTable, DecisionOutcome, GroundingOutcome, ReasonCode,
    TableError,
};
use crate::geometry::{PointCloud, RigidTransform};
use crate::model::{check_bundle, default_bundle, ModelDims};
use crate::neural::{NeuralError, WeightBundle};
use crate::query::{parse_query, InteractionQuery, ParseError, QueryVocabulary};
use crate::types::{SegmentationResult, StageTimings};
use crate::vlm::{
    encode_text, ground, EncodeError, GroundingBackend, GroundingError, ImageInput, OracleBackend,
    RemoteBackend, Tokenizer, ToyBackend,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("manifest is invalid: {0}")]
    Invalid(ValidationErrors),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store lacks clouds referenced by the manifest: {}", .0.join(", "))]
    MissingClouds(Vec<String>),
    #[error("weights: {0}")]
    Weights(#[from] NeuralError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("backend: {0}")]
    Backend(#[from] GroundingError),
}

/// Failures that are not domain refusals.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown image '{0}'")]
    UnknownImage(String),
    #[error("reading image {path}: {source}")]
    ImageIo { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

impl PipelineError {
    /// The grounding service could not be reached or answered garbage.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Grounding(
                GroundingError::BackendUnavailable(_) | GroundingError::ProtocolError(_)
            )
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSettings {
    pub confidence_threshold: f64,
    pub icp: IcpParams,
    pub segmentation: SegmentationMode,
}

impl EngineSettings {
    pub fn from_config(c: &Config) -> Self {
        Self {
            confidence_threshold: c.confidence_threshold,
            icp: c.icp,
            segmentation: c.segmentation,
        }
    }
}

/// One pipeline request.
#[derive(Debug, Clone)]
pub struct QueryInput {
    pub image: ImageInput,
    pub text: String,
    /// Observed object points to register against the canonical cloud;
    /// without it the transform is the identity.
    pub query_cloud: Option<PointCloud>,
}

/// Immutable engine state; cheap to share behind an `Arc`.
pub struct Engine {
    manifest: Manifest,
    manifest_dir: PathBuf,
    store: StoreIndex,
    weights: Arc<WeightBundle>,
    tokenizer: Tokenizer,
    vocab: QueryVocabulary,
    table: CompatibilityTable,
    backend: Box<dyn GroundingBackend>,
    settings: EngineSettings,
    stats: StatsReport,
}

fn timed<T>(timings: &mut StageTimings, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

impl Engine {
    /// Loads manifest, store and weights named by `config` and builds the
    /// configured backend.
    pub fn load(config: &Config) -> Result<Self, EngineError> {
        config.check().map_err(EngineError::Config)?;
        let manifest_path = config
            .manifest
            .as_ref()
            .ok_or_else(|| EngineError::Config("no manifest path configured".into()))?;
        let manifest = Manifest::load(manifest_path)?;
        let manifest_dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let store_dir = config
            .store
            .clone()
            .unwrap_or_else(|| manifest_dir.join("store"));
        let store = StoreIndex::load(&store_dir)?;
        let tokenizer = manifest.tokenizer();
        let weights = match &config.weights {
            Some(path) => {
                let w = WeightBundle::load(path)?;
                check_bundle(&w, tokenizer.len())?;
                w
            }
            None => default_bundle(
                &ModelDims {
                    vocab_size: tokenizer.len(),
                    ..ModelDims::default()
                },
                config.seed,
            )?,
        };
        let weights = Arc::new(weights);
        let backend: Box<dyn GroundingBackend> = match config.backend {
            BackendKind::Toy => Box::new(ToyBackend::new(
                weights.clone(),
                tokenizer.clone(),
                &manifest.vocab.objects,
                manifest.regions(),
            )?),
            BackendKind::Oracle => Box::new(OracleBackend::new(manifest.oracle_annotations())),
            BackendKind::Remote => Box::new(RemoteBackend::new(
                config.remote_url.as_deref().unwrap_or_default(),
                config.remote_timeout(),
            )),
        };
        Self::new(
            manifest,
            manifest_dir,
            store,
            weights,
            backend,
            EngineSettings::from_config(config),
        )
    }

    /// Validates the manifest and checks every referenced cloud is stored.
    pub fn new(
        manifest: Manifest,
        manifest_dir: PathBuf,
        store: StoreIndex,
        weights: Arc<WeightBundle>,
        backend: Box<dyn GroundingBackend>,
        settings: EngineSettings,
    ) -> Result<Self, EngineError> {
        let stats = validate_manifest(&manifest).map_err(EngineError::Invalid)?;
        let mut missing: Vec<String> = manifest
            .clouds
            .iter()
            .filter(|c| store.get(&c.cloud_id).is_err())
            .map(|c| c.cloud_id.clone())
            .collect();
        missing.dedup();
        if !missing.is_empty() {
            return Err(EngineError::MissingClouds(missing));
        }
        let tokenizer = manifest.tokenizer();
        check_bundle(&weights, tokenizer.len())?;
        Ok(Self {
            vocab: manifest.query_vocabulary(),
            table: manifest.compatibility_table()?,
            tokenizer,
            manifest,
            manifest_dir,
            store,
            weights,
            backend,
            settings,
            stats,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn manifest_dir(&self) -> &Path {
        &self.manifest_dir
    }

    pub fn store(&self) -> &StoreIndex {
        &self.store
    }

    pub fn stats(&self) -> &StatsReport {
        &self.stats
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn weights(&self) -> &WeightBundle {
        &self.weights
    }

    pub fn image_path(&self, image_id: &str) -> Option<PathBuf> {
        self.manifest
            .image(image_id)
            .map(|img| self.manifest_dir.join(&img.path))
    }

    /// Input for a manifest image; pixels are read only when the backend
    /// uses them.
    pub fn image_input(&self, image_id: &str) -> Result<ImageInput, PipelineError> {
        let path = self
            .image_path(image_id)
            .ok_or_else(|| PipelineError::UnknownImage(image_id.to_string()))?;
        let bytes = if self.backend.needs_pixels() {
            let b = fs::read(&path).map_err(|source| PipelineError::ImageIo { path, source })?;
            Some(Arc::new(b))
        } else {
            None
        };
        Ok(ImageInput {
            image_id: Some(image_id.to_string()),
            bytes,
        })
    }

    /// Candidate objects for a query without an object noun: the image's
    /// annotations in order, else the compatibility table.
    fn fallback_candidates(&self, image: &ImageInput) -> Vec<&str> {
        if let Some(img) = image.image_id.as_deref().and_then(|id| self.manifest.image(id)) {
            img.annotations.iter().map(|a| a.label.as_str()).collect()
        } else {
            self.table.object_actions.keys().map(String::as_str).collect()
        }
    }

    fn resolve_query(&self, input: &QueryInput) -> Result<InteractionQuery, DecisionOutcome> {
        match parse_query(&input.text, &self.vocab) {
            Ok(q) => Ok(q),
            Err(err @ ParseError::NoObjectFound { .. }) => {
                let action = err.action().unwrap_or_default();
                if self.table.is_physical(action) {
                    return Err(decide_unparsed(&err, &self.table));
                }
                let candidates = self.fallback_candidates(&input.image);
                match self.table.first_supporting(action, candidates) {
                    Some(object) => InteractionQuery::from_parts(action, object, &input.text, &self.vocab)
                        .map_err(|e| decide_unparsed(&e, &self.table)),
                    None => Err(DecisionOutcome::refuse(
                        ReasonCode::ObjectNotFound,
                        action,
                        "suitable object",
                    )),
                }
            }
            Err(err) => Err(decide_unparsed(&err, &self.table)),
        }
    }

    /// Runs one query. Refusals are `Ok` values; `Err` is reserved for
    /// infrastructure failures.
    pub fn run(&self, input: &QueryInput) -> Result<SegmentationResult, PipelineError> {
        let total = Instant::now();
        let mut timings = StageTimings::new();
        let finish = |mut r: SegmentationResult, mut timings: StageTimings| {
            timings.insert("total".into(), total.elapsed().as_secs_f64() * 1e3);
            r.timing_ms = timings;
            r
        };

        let query = match timed(&mut timings, "parse", || self.resolve_query(input)) {
            Ok(q) => q,
            Err(refusal) => return Ok(finish(SegmentationResult::refused(refusal, None), timings)),
        };

        let grounding = if self.table.is_physical(&query.action) {
            // physical acts are refused whatever the image shows
            GroundingOutcome::NotFound
        } else {
            match timed(&mut timings, "ground", || ground(self.backend.as_ref(), &input.image, &query)) {
                Ok(g) => GroundingOutcome::Found(g),
                Err(GroundingError::ObjectNotFound(_)) => GroundingOutcome::NotFound,
                Err(e) => return Err(e.into()),
            }
        };
        let found = match &grounding {
            GroundingOutcome::Found(g) => Some(g.clone()),
            GroundingOutcome::NotFound => None,
        };
        let decision = timed(&mut timings, "decide", || {
            decide(&query, &grounding, &self.table, self.settings.confidence_threshold)
        });
        let DecisionOutcome::Proceed { label } = &decision else {
            return Ok(finish(SegmentationResult::refused(decision, found), timings));
        };

        let record = match timed(&mut timings, "retrieve", || self.store.retrieve(label)) {
            Ok(r) => r,
            Err(_) => {
                let refusal = DecisionOutcome::refuse(ReasonCode::ObjectNotFound, &query.action, label);
                return Ok(finish(SegmentationResult::refused(refusal, found), timings));
            }
        };

        let transform = timed(&mut timings, "register", || match &input.query_cloud {
            Some(c) => icp_register(c, &record.cloud, &self.settings.icp).map(|r| r.transform),
            None => Ok(RigidTransform::identity()),
        })?;

        let map = timed(&mut timings, "segment", || -> Result<_, PipelineError> {
            let text = match self.settings.segmentation {
                SegmentationMode::Neural => Some(encode_text(&query, &self.tokenizer, &self.weights)?),
                _ => None,
            };
            Ok(self
                .settings
                .segmentation
                .run(record, text.as_ref(), &query.action, &self.weights)?)
        })?;

        Ok(finish(
            SegmentationResult {
                decision,
                grounding: found,
                map: Some(map),
                transform: Some(transform),
                timing_ms: StageTimings::new(),
            },
            timings,
        ))
    }
}
