//! Map-vs-map evaluation metrics over per-point scores.
//!
//! * mIoU: prediction binarized at `iou_threshold`, ground truth at
//!   `gt_threshold`; IoU of the positive sets, 1 when both are empty.
//! * AUC: ROC area from the Mann-Whitney rank statistic; a tied
//!   positive/negative pair contributes per [`TiePolicy`].
//! * SIM: both maps normalized to unit mass, `Σ min(p, g)`.
//! * MAE: mean absolute difference of raw scores.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("maps have different lengths ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("ground truth has a single class ({positives} positive of {n})")]
    DegenerateGroundTruth { positives: usize, n: usize },
    #[error("a map has zero total mass")]
    ZeroMassMap,
    #[error("maps are empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// A tie counts one half.
    #[default]
    Half,
    /// A tie counts as a miss.
    Pessimistic,
    /// A tie counts as a hit.
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub iou_threshold: f64,
    pub gt_threshold: f64,
    pub auc_ties: TiePolicy,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            gt_threshold: 0.5,
            auc_ties: TiePolicy::Half,
        }
    }
}

fn check_len(pred: &[f64], gt: &[f64]) -> Result<(), MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn miou(pred: &[f64], gt: &[f64], tau: f64, gt_threshold: f64) -> Result<f64, MetricError> {
    check_len(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p >= tau, g >= gt_threshold);
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// O(N log N): sort by score, then count positive/negative pairs group by
/// group of equal scores. Counts stay integral (doubled for half ties) until
/// the final division.
pub fn auc(pred: &[f64], gt: &[f64], gt_threshold: f64, ties: TiePolicy) -> Result<f64, MetricError> {
    check_len(pred, gt)?;
    let mut items: Vec<(f64, bool)> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (p, g >= gt_threshold))
        .collect();
    let positives = items.iter().filter(|x| x.1).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::DegenerateGroundTruth {
            positives,
            n: items.len(),
        });
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the number of (positive above negative) pairs, plus tie credit
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < items.len() && items[j].0 == items[i].0 {
            if items[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below;
        twice_u += match ties {
            TiePolicy::Half => pos * neg,
            TiePolicy::Pessimistic => 0,
            TiePolicy::Optimistic => 2 * pos * neg,
        };
        neg_below += neg;
        i = j;
    }
    let u = twice_u as f64 / 2.0;
    Ok(u / (positives as f64 * negatives as f64))
}

/// Sum in ascending order, so the result does not depend on point order.
fn ordered_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

pub fn sim(pred: &[f64], gt: &[f64]) -> Result<f64, MetricError> {
    check_len(pred, gt)?;
    let sp = ordered_sum(pred.to_vec());
    let sg = ordered_sum(gt.to_vec());
    if !(sp > 0.0) || !(sg > 0.0) {
        return Err(MetricError::ZeroMassMap);
    }
    // sum of min(p/sp, g/sg), scaled by sp so identical maps give exactly 1;
    // the smaller-mass map goes first so the result is bitwise symmetric;
    // equal masses give ratio 1 where min is symmetric anyway
    let (a, b, sa, sb) = if sp > sg { (gt, pred, sg, sp) } else { (pred, gt, sp, sg) };
    let ratio = sa / sb;
    let s = ordered_sum(a.iter().zip(b).map(|(&x, &y)| x.min(y * ratio)).collect());
    Ok((s / sa).clamp(0.0, 1.0))
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64, MetricError> {
    check_len(pred, gt)?;
    let s = ordered_sum(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).collect());
    Ok(s / pred.len() as f64)
}

/// All four metrics for one sample. AUC is `None` for single-class ground
/// truth and SIM is `None` when a map has no mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub miou: f64,
    pub auc: Option<f64>,
    pub sim: Option<f64>,
    pub mae: f64,
}

pub fn evaluate(pred: &[f64], gt: &[f64], params: &MetricParams) -> Result<SampleMetrics, MetricError> {
    let miou = miou(pred, gt, params.iou_threshold, params.gt_threshold)?;
    let auc = match auc(pred, gt, params.gt_threshold, params.auc_ties) {
        Ok(v) => Some(v),
        Err(MetricError::DegenerateGroundTruth { .. }) => None,
        Err(e) => return Err(e),
    };
    let sim = match sim(pred, gt) {
        Ok(v) => Some(v),
        Err(MetricError::ZeroMassMap) => None,
        Err(e) => return Err(e),
    };
    Ok(SampleMetrics {
        miou,
        auc,
        sim,
        mae: mae(pred, gt)?,
    })
}
