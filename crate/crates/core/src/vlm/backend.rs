//! Grounding backends: a toy similarity model, a ground-truth oracle and a
//! remote HTTP service.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::WeightBundle;
use crate::query::InteractionQuery;
use crate::types::{BBox, GroundingResult};

use super::encoder::{cosine, encode_image, encode_tokens, EncodeError, Tokenizer};
use super::patch::{patchify_bytes, ImagePatchGrid, PatchError};

pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("object '{0}' not found in image")]
    ObjectNotFound(String),
    #[error("grounding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("grounding protocol error: {0}")]
    ProtocolError(String),
    #[error("backend needs image pixels but none were supplied")]
    MissingImage,
    #[error(transparent)]
    Image(#[from] PatchError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// An image as the pipeline sees it: a manifest id, raw encoded bytes, or both.
#[derive(Debug, Clone, Default)]
pub struct ImageInput {
    pub image_id: Option<String>,
    pub bytes: Option<Arc<Vec<u8>>>,
}

impl ImageInput {
    pub fn from_id(id: impl Into<String>) -> Self {
        Self {
            image_id: Some(id.into()),
            bytes: None,
        }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self {
            image_id: None,
            bytes: Some(Arc::new(bytes)),
        }
    }

    fn source_id(&self) -> &str {
        self.image_id.as_deref().unwrap_or("inline")
    }
}

/// Implementations must be deterministic for identical inputs and safe to
/// call concurrently.
pub trait GroundingBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether `ground` reads image bytes; callers may skip loading them otherwise.
    fn needs_pixels(&self) -> bool {
        true
    }

    fn ground(&self, image: &ImageInput, query: &InteractionQuery)
        -> Result<GroundingResult, GroundingError>;
}

/// Scores the query object's text prototype against the pooled visual token.
/// Confidence is `(cos + 1) / 2`; the box comes from a per-label lookup table.
pub struct ToyBackend {
    weights: Arc<WeightBundle>,
    tokenizer: Tokenizer,
    prototypes: BTreeMap<String, Vec<f64>>,
    regions: BTreeMap<String, BBox>,
}

impl ToyBackend {
    /// Prototypes are the text encodings of each label.
    pub fn new<I, S>(
        weights: Arc<WeightBundle>,
        tokenizer: Tokenizer,
        labels: I,
        regions: BTreeMap<String, BBox>,
    ) -> Result<Self, GroundingError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut prototypes = BTreeMap::new();
        for label in labels {
            let label = label.as_ref();
            let tokens: Vec<String> = label.split_whitespace().map(str::to_string).collect();
            let emb = encode_tokens(&tokens, &tokenizer, &weights)?;
            prototypes.insert(label.to_string(), emb.vector);
        }
        Ok(Self {
            weights,
            tokenizer,
            prototypes,
            regions,
        })
    }

    /// Replaces a label's prototype with the visual token of `grid`.
    pub fn fit_prototype(&mut self, label: &str, grid: &ImagePatchGrid) -> Result<(), GroundingError> {
        let token = encode_image(grid, &self.weights)?;
        self.prototypes.insert(label.to_string(), token.0);
        Ok(())
    }

    pub fn prototype(&self, label: &str) -> Option<&[f64]> {
        self.prototypes.get(label).map(Vec::as_slice)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    /// Calibrated similarity between a visual token and a label prototype.
    pub fn confidence(&self, visual: &[f64], label: &str) -> Option<f64> {
        self.prototypes
            .get(label)
            .map(|p| ((cosine(visual, p) + 1.0) / 2.0).clamp(0.0, 1.0))
    }
}

impl GroundingBackend for ToyBackend {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn ground(&self, image: &ImageInput, query: &InteractionQuery) -> Result<GroundingResult, GroundingError> {
        if !self.prototypes.contains_key(&query.object) {
            return Err(GroundingError::ObjectNotFound(query.object.clone()));
        }
        let bytes = image.bytes.as_ref().ok_or(GroundingError::MissingImage)?;
        let grid = patchify_bytes(bytes, image.source_id())?;
        let visual = encode_image(&grid, &self.weights)?;
        let confidence = self
            .confidence(&visual.0, &query.object)
            .expect("prototype checked above");
        let bbox = self.regions.get(&query.object).copied().unwrap_or_else(BBox::full);
        GroundingResult::new(query.object.clone(), bbox, confidence)
            .map_err(|e| GroundingError::ProtocolError(e.to_string()))
    }
}

/// Returns the stored annotation for `(image, object)` with confidence 1.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    annotations: BTreeMap<String, Vec<(String, BBox)>>,
}

impl OracleBackend {
    pub fn new(annotations: BTreeMap<String, Vec<(String, BBox)>>) -> Self {
        Self { annotations }
    }

    pub fn annotations(&self) -> &BTreeMap<String, Vec<(String, BBox)>> {
        &self.annotations
    }
}

impl GroundingBackend for OracleBackend {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn needs_pixels(&self) -> bool {
        false
    }

    fn ground(&self, image: &ImageInput, query: &InteractionQuery) -> Result<GroundingResult, GroundingError> {
        let not_found = || GroundingError::ObjectNotFound(query.object.clone());
        let id = image.image_id.as_ref().ok_or_else(not_found)?;
        let (label, bbox) = self
            .annotations
            .get(id)
            .and_then(|anns| anns.iter().find(|(label, _)| *label == query.object))
            .ok_or_else(not_found)?;
        Ok(GroundingResult {
            label: label.clone(),
            bbox: *bbox,
            confidence: 1.0,
        })
    }
}

#[derive(Debug, Serialize)]
struct RemoteRequest<'a> {
    image_b64: String,
    action: &'a str,
    object: &'a str,
}

#[derive(Debug, Deserialize)]
struct RemoteResponse {
    label: Option<String>,
    bbox: Option<[f64; 4]>,
    confidence: Option<f64>,
}

/// `POST {base}/ground` with `{"image_b64", "action", "object"}`; expects
/// `{"label", "bbox", "confidence"}`. A `null` label means the object is absent.
pub struct RemoteBackend {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .max_idle_connections(8)
            .max_idle_connections_per_host(8)
            .build();
        Self {
            endpoint: format!("{}/ground", base_url.trim_end_matches('/')),
            agent: config.into(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl GroundingBackend for RemoteBackend {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn ground(&self, image: &ImageInput, query: &InteractionQuery) -> Result<GroundingResult, GroundingError> {
        let bytes = image.bytes.as_ref().ok_or(GroundingError::MissingImage)?;
        let body = RemoteRequest {
            image_b64: base64::engine::general_purpose::STANDARD.encode(bytes.as_slice()),
            action: &query.action,
            object: &query.object,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&body)
            .map_err(|e| GroundingError::BackendUnavailable(e.to_string()))?;
        if resp.status() != 200 {
            return Err(GroundingError::BackendUnavailable(format!(
                "{} returned HTTP {}",
                self.endpoint,
                resp.status()
            )));
        }
        let parsed: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| GroundingError::ProtocolError(e.to_string()))?;
        let Some(label) = parsed.label else {
            return Err(GroundingError::ObjectNotFound(query.object.clone()));
        };
        let (bbox, confidence) = match (parsed.bbox, parsed.confidence) {
            (Some(b), Some(c)) => (b, c),
            _ => return Err(GroundingError::ProtocolError("missing bbox or confidence".into())),
        };
        let bbox = BBox::new(bbox).map_err(|e| GroundingError::ProtocolError(e.to_string()))?;
        GroundingResult::new(label, bbox, confidence)
            .map_err(|e| GroundingError::ProtocolError(e.to_string()))
    }
}
