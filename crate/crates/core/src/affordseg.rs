//! Language-guided per-point affordance scoring.
//!
//! Forward pass for an `N`-point cloud and a pooled text embedding `t`:
//!
//! 1. T-Net: shared ReLU MLP `3 -> d -> d`, max-pool over points, linear
//!    regressor to nine values added to the identity; points are mapped by
//!    the resulting 3x3 matrix.
//! 2. Input projection `3 -> d` with add & norm, then `seg_encoder_blocks`
//!    residual MLP blocks with add & norm.
//! 3. Cross-attention with point features as queries and `t` as the single
//!    key/value row, add & norm.
//! 4. Feed-forward, add & norm, linear `d -> 1`, sigmoid.
//!
//! Every step is per-point or a symmetric pool, so permuting the input
//! permutes the output scores identically.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloudstore::CloudRecord;
use crate::geometry::{normalize_cloud, PointCloud};
use crate::neural::ops::{layer_norm, linear, max_rows, relu, sigmoid, LAYER_NORM_EPS};
use crate::neural::{
    add_norm_named, attention_specs, feed_forward, feed_forward_specs, multi_head_attention,
    norm_specs, Init, Matrix, NeuralError, ParamSpec, WeightBundle,
};
use crate::types::{AffordanceMap, TypeError};
use crate::util::stable_seed;
use crate::vlm::TextEmbedding;

const NS: &str = "affordseg";

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("text embedding has dimension {got}, expected {expected}")]
    TextDim { got: usize, expected: usize },
    #[error("no ground-truth map for affordance '{affordance}' on cloud {cloud}")]
    NoGroundTruth { cloud: String, affordance: String },
    #[error(transparent)]
    Map(#[from] TypeError),
}

/// Parameter shapes of the segmentation head.
pub fn affordseg_specs(d: usize, encoder_blocks: usize) -> Vec<ParamSpec> {
    let mut specs = vec![
        ParamSpec::new(format!("{NS}.tnet.mlp1.w"), 3, d, Init::Normal),
        ParamSpec::new(format!("{NS}.tnet.mlp1.b"), 1, d, Init::Zeros),
        ParamSpec::new(format!("{NS}.tnet.mlp2.w"), d, d, Init::Normal),
        ParamSpec::new(format!("{NS}.tnet.mlp2.b"), 1, d, Init::Zeros),
        ParamSpec::new(format!("{NS}.tnet.reg.w"), d, 9, Init::Normal),
        ParamSpec::new(format!("{NS}.tnet.reg.b"), 1, 9, Init::Zeros),
        ParamSpec::new(format!("{NS}.input.w"), 3, d, Init::Normal),
        ParamSpec::new(format!("{NS}.input.b"), 1, d, Init::Zeros),
        ParamSpec::new(format!("{NS}.score.w"), d, 1, Init::Normal),
        ParamSpec::new(format!("{NS}.score.b"), 1, 1, Init::Zeros),
    ];
    specs.extend(norm_specs(&format!("{NS}.input_ln"), d));
    for i in 0..encoder_blocks {
        specs.extend(feed_forward_specs(&format!("{NS}.enc{i}.ffn"), d));
        specs.extend(norm_specs(&format!("{NS}.enc{i}.ln"), d));
    }
    specs.extend(attention_specs(&format!("{NS}.xattn"), d));
    specs.extend(norm_specs(&format!("{NS}.xattn_ln"), d));
    specs.extend(feed_forward_specs(&format!("{NS}.head.ffn"), d));
    specs.extend(norm_specs(&format!("{NS}.head_ln"), d));
    specs
}

fn points_matrix(cloud: &PointCloud) -> Matrix {
    Matrix::new(cloud.len(), 3, cloud.points().concat()).expect("cloud coordinates are finite")
}

/// Predicted input transform: identity plus the regressed residual.
pub fn tnet(cloud: &PointCloud, w: &WeightBundle) -> Result<[[f64; 3]; 3], SegmentError> {
    let d = w.meta().d;
    let x = points_matrix(cloud);
    let h = linear(
        &x,
        w.require(&format!("{NS}.tnet.mlp1.w"), 3, d)?,
        w.require(&format!("{NS}.tnet.mlp1.b"), 1, d)?,
    )?
    .map(relu);
    let h = linear(
        &h,
        w.require(&format!("{NS}.tnet.mlp2.w"), d, d)?,
        w.require(&format!("{NS}.tnet.mlp2.b"), 1, d)?,
    )?
    .map(relu);
    let pooled = max_rows(&h);
    let r = linear(
        &pooled,
        w.require(&format!("{NS}.tnet.reg.w"), d, 9)?,
        w.require(&format!("{NS}.tnet.reg.b"), 1, 9)?,
    )?;
    let r = r.data();
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r[i * 3 + j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    Ok(m)
}

/// Applies `m` to every point (`p' = M p`) and returns the `N x 3` matrix.
fn transform_points(cloud: &PointCloud, m: &[[f64; 3]; 3]) -> Matrix {
    let data: Vec<f64> = cloud
        .points()
        .iter()
        .flat_map(|p| {
            (0..3).map(move |i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2])
        })
        .collect();
    Matrix::new(cloud.len(), 3, data).expect("finite transformed points")
}

/// Per-point features before fusion with the text stream.
pub fn point_features(cloud: &PointCloud, w: &WeightBundle) -> Result<Matrix, SegmentError> {
    let d = w.meta().d;
    let t = tnet(cloud, w)?;
    let x = transform_points(cloud, &t);
    let x = linear(
        &x,
        w.require(&format!("{NS}.input.w"), 3, d)?,
        w.require(&format!("{NS}.input.b"), 1, d)?,
    )?;
    let mut x = layer_norm(
        &x,
        w.require(&format!("{NS}.input_ln.gain"), 1, d)?.data(),
        w.require(&format!("{NS}.input_ln.bias"), 1, d)?.data(),
        LAYER_NORM_EPS,
    )?;
    for i in 0..w.meta().seg_encoder_blocks {
        let f = feed_forward(&x, w, &format!("{NS}.enc{i}.ffn"))?;
        x = add_norm_named(&x, &f, w, &format!("{NS}.enc{i}.ln"))?;
    }
    Ok(x)
}

/// Scores every point of `cloud` for `affordance` given the query embedding.
pub fn segment(
    cloud: &PointCloud,
    text: &TextEmbedding,
    affordance: &str,
    w: &WeightBundle,
) -> Result<AffordanceMap, SegmentError> {
    let d = w.meta().d;
    if text.vector.len() != d {
        return Err(SegmentError::TextDim {
            got: text.vector.len(),
            expected: d,
        });
    }
    let x = point_features(cloud, w)?;
    let t = Matrix::row_vector(&text.vector)?;
    let a = multi_head_attention(&x, &t, &t, w, &format!("{NS}.xattn"))?;
    let x = add_norm_named(&x, &a, w, &format!("{NS}.xattn_ln"))?;
    let f = feed_forward(&x, w, &format!("{NS}.head.ffn"))?;
    let x = add_norm_named(&x, &f, w, &format!("{NS}.head_ln"))?;
    let logits = linear(
        &x,
        w.require(&format!("{NS}.score.w"), d, 1)?,
        w.require(&format!("{NS}.score.b"), 1, 1)?,
    )?;
    let scores = logits.data().iter().map(|&z| sigmoid(z)).collect();
    Ok(AffordanceMap::for_cloud(cloud, affordance, scores)?)
}

/// How the pipeline produces affordance maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SegmentationMode {
    /// The neural head over the loaded weight bundle.
    #[default]
    Neural,
    /// Stored ground truth for `(cloud, affordance)`.
    Oracle,
    /// Ground truth plus clamped Gaussian noise. For a fixed seed the
    /// per-point draws do not depend on `sigma`.
    NoisyOracle { sigma: f64, seed: u64 },
}

pub fn segment_oracle(record: &CloudRecord, affordance: &str) -> Result<AffordanceMap, SegmentError> {
    record
        .gt_map(affordance)
        .cloned()
        .ok_or_else(|| SegmentError::NoGroundTruth {
            cloud: record.id().to_string(),
            affordance: affordance.to_string(),
        })
}

pub fn segment_noisy_oracle(
    record: &CloudRecord,
    affordance: &str,
    sigma: f64,
    seed: u64,
) -> Result<AffordanceMap, SegmentError> {
    let gt = segment_oracle(record, affordance)?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(stable_seed(seed, &[record.id(), affordance]));
    let scores = gt
        .scores()
        .iter()
        .map(|&g| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (g + sigma * z).clamp(0.0, 1.0)
        })
        .collect();
    Ok(AffordanceMap::new(gt.cloud_id(), affordance, scores)?)
}

impl SegmentationMode {
    pub fn run(
        &self,
        record: &CloudRecord,
        text: Option<&TextEmbedding>,
        affordance: &str,
        w: &WeightBundle,
    ) -> Result<AffordanceMap, SegmentError> {
        match *self {
            SegmentationMode::Neural => {
                let text = text.ok_or(SegmentError::TextDim {
                    got: 0,
                    expected: w.meta().d,
                })?;
                segment(&normalize_cloud(&record.cloud).0, text, affordance, w)
            }
            SegmentationMode::Oracle => segment_oracle(record, affordance),
            SegmentationMode::NoisyOracle { sigma, seed } => {
                segment_noisy_oracle(record, affordance, sigma, seed)
            }
        }
    }
}
