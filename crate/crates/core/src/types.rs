use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::DecisionOutcome;
use crate::geometry::{PointCloud, RigidTransform};

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("bounding box {0:?} is not a valid normalized box")]
    BadBox([f64; 4]),
    #[error("confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("score {index} = {value} outside [0, 1]")]
    BadScore { index: usize, value: f64 },
    #[error("map has {scores} scores but cloud has {points} points")]
    LengthMismatch { scores: usize, points: usize },
    #[error("map references cloud {map}, expected {cloud}")]
    CloudMismatch { map: String, cloud: String },
}

/// Normalized `(x_min, y_min, x_max, y_max)` box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox([f64; 4]);

impl BBox {
    pub fn new(b: [f64; 4]) -> Result<Self, TypeError> {
        let ok = b.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
            && b[0] < b[2]
            && b[1] < b[3];
        if ok {
            Ok(Self(b))
        } else {
            Err(TypeError::BadBox(b))
        }
    }

    pub fn full() -> Self {
        Self([0.0, 0.0, 1.0, 1.0])
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = TypeError;
    fn try_from(b: [f64; 4]) -> Result<Self, TypeError> {
        BBox::new(b)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.0
    }
}

/// Output of the vision-language stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrounding")]
pub struct GroundingResult {
    pub label: String,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Deserialize)]
struct RawGrounding {
    label: String,
    bbox: BBox,
    confidence: f64,
}

impl TryFrom<RawGrounding> for GroundingResult {
    type Error = TypeError;
    fn try_from(r: RawGrounding) -> Result<Self, TypeError> {
        GroundingResult::new(r.label, r.bbox, r.confidence)
    }
}

impl GroundingResult {
    pub fn new(label: impl Into<String>, bbox: BBox, confidence: f64) -> Result<Self, TypeError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(TypeError::BadConfidence(confidence));
        }
        Ok(Self {
            label: label.into(),
            bbox,
            confidence,
        })
    }
}

/// Per-point scores in `[0, 1]` for one affordance on one cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap")]
pub struct AffordanceMap {
    cloud_id: String,
    affordance: String,
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMap {
    cloud_id: String,
    affordance: String,
    scores: Vec<f64>,
}

impl TryFrom<RawMap> for AffordanceMap {
    type Error = TypeError;
    fn try_from(r: RawMap) -> Result<Self, TypeError> {
        AffordanceMap::new(r.cloud_id, r.affordance, r.scores)
    }
}

impl AffordanceMap {
    pub fn new(
        cloud_id: impl Into<String>,
        affordance: impl Into<String>,
        scores: Vec<f64>,
    ) -> Result<Self, TypeError> {
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(TypeError::BadScore { index, value });
        }
        Ok(Self {
            cloud_id: cloud_id.into(),
            affordance: affordance.into(),
            scores,
        })
    }

    /// Like [`AffordanceMap::new`], additionally checking the map fits `cloud`.
    pub fn for_cloud(
        cloud: &PointCloud,
        affordance: impl Into<String>,
        scores: Vec<f64>,
    ) -> Result<Self, TypeError> {
        if scores.len() != cloud.len() {
            return Err(TypeError::LengthMismatch {
                scores: scores.len(),
                points: cloud.len(),
            });
        }
        Self::new(cloud.id(), affordance, scores)
    }

    pub fn check_against(&self, cloud: &PointCloud) -> Result<(), TypeError> {
        if self.cloud_id != cloud.id() {
            return Err(TypeError::CloudMismatch {
                map: self.cloud_id.clone(),
                cloud: cloud.id().to_string(),
            });
        }
        if self.scores.len() != cloud.len() {
            return Err(TypeError::LengthMismatch {
                scores: self.scores.len(),
                points: cloud.len(),
            });
        }
        Ok(())
    }

    pub fn cloud_id(&self) -> &str {
        &self.cloud_id
    }

    pub fn affordance(&self) -> &str {
        &self.affordance
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            cloud_id: self.cloud_id.clone(),
            affordance: self.affordance.clone(),
            scores: order.iter().map(|&i| self.scores[i]).collect(),
        }
    }
}

/// Wall-clock milliseconds per pipeline stage.
pub type StageTimings = BTreeMap<String, f64>;

/// Final output of one pipeline pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    #[serde(flatten)]
    pub decision: DecisionOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<AffordanceMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<RigidTransform>,
    pub timing_ms: StageTimings,
}

impl SegmentationResult {
    pub fn refused(decision: DecisionOutcome, grounding: Option<GroundingResult>) -> Self {
        debug_assert!(!decision.is_proceed());
        Self {
            decision,
            grounding,
            map: None,
            transform: None,
            timing_ms: StageTimings::new(),
        }
    }

    /// Map and transform are present exactly when the decision is Proceed.
    pub fn is_consistent(&self) -> bool {
        let proceed = self.decision.is_proceed();
        proceed == self.map.is_some() && proceed == self.transform.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_validation() {
        assert!(BBox::new([0.1, 0.2, 0.3, 0.4]).is_ok());
        assert!(BBox::new([0.3, 0.2, 0.3, 0.4]).is_err());
        assert!(BBox::new([0.0, 0.5, 1.0, 0.4]).is_err());
        assert!(BBox::new([-0.1, 0.0, 1.0, 1.0]).is_err());
        assert!(BBox::new([0.0, 0.0, 1.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<BBox>("[0.5,0,0.4,1]").is_err());
    }

    #[test]
    fn grounding_confidence_range() {
        assert!(GroundingResult::new("sofa", BBox::full(), 1.0).is_ok());
        assert!(GroundingResult::new("sofa", BBox::full(), 1.5).is_err());
        let bad = r#"{"label":"sofa","bbox":[0,0,1,1],"confidence":-0.1}"#;
        assert!(serde_json::from_str::<GroundingResult>(bad).is_err());
    }

    #[test]
    fn map_validation() {
        assert!(AffordanceMap::new("c", "sit", vec![0.0, 0.5, 1.0]).is_ok());
        assert!(matches!(
            AffordanceMap::new("c", "sit", vec![0.0, 1.5]),
            Err(TypeError::BadScore { index: 1, .. })
        ));
        assert!(AffordanceMap::new("c", "sit", vec![f64::NAN]).is_err());
        let cloud = PointCloud::new("c", vec![[0.0; 3]; 2]).unwrap();
        assert!(matches!(
            AffordanceMap::for_cloud(&cloud, "sit", vec![0.1]),
            Err(TypeError::LengthMismatch { .. })
        ));
        let m = AffordanceMap::new("other", "sit", vec![0.1, 0.2]).unwrap();
        assert!(matches!(
            m.check_against(&cloud),
            Err(TypeError::CloudMismatch { .. })
        ));
    }
}
