use serde::{Deserialize, Serialize};

use super::kabsch::kabsch;
use super::knn::{nearest_neighbors, UniformGrid, BRUTE_FORCE_LIMIT};
use super::RegistrationError;
use crate::geometry::{PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop once the residual improves by less than this.
    pub tol: f64,
    /// Fraction of worst correspondences dropped each iteration, in `[0, 1)`.
    pub trim_fraction: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-8,
            trim_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform,
    /// RMS correspondence distance after each iteration's alignment.
    pub residuals: Vec<f64>,
}

/// Point-to-point ICP from `source` onto `target`, starting from centroid
/// alignment.
///
/// Each iteration matches every transformed source point to its nearest
/// target point, drops the worst `trim_fraction`, and solves for the best
/// rigid transform of the original source onto the matches. The recorded
/// residual is the RMS distance of those matches under the new transform,
/// which cannot exceed the previous iteration's value.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcpParams,
) -> Result<IcpResult, RegistrationError> {
    if source.len() < 3 || target.len() < 3 {
        return Err(RegistrationError::DegenerateCorrespondences(
            "ICP needs at least 3 points per cloud".into(),
        ));
    }
    if !(0.0..1.0).contains(&params.trim_fraction) {
        return Err(RegistrationError::BadParams(format!(
            "trim_fraction {} outside [0, 1)",
            params.trim_fraction
        )));
    }
    let src = source.points();
    let tgt = target.points();
    let keep = ((src.len() as f64) * (1.0 - params.trim_fraction)).ceil() as usize;
    let keep = keep.clamp(3, src.len());

    let cs = source.centroid();
    let ct = target.centroid();
    let mut current = RigidTransform::from_translation([ct[0] - cs[0], ct[1] - cs[1], ct[2] - cs[2]]);
    let grid = (tgt.len() > BRUTE_FORCE_LIMIT).then(|| UniformGrid::build(tgt));

    let mut residuals: Vec<f64> = Vec::new();
    for _ in 0..params.max_iters.max(1) {
        let moved: Vec<[f64; 3]> = src.iter().map(|p| current.apply_point(p)).collect();
        let nn = match &grid {
            Some(g) => g.nearest_all(&moved),
            None => nearest_neighbors(&moved, tgt),
        };
        let mut pairs: Vec<(f64, usize)> = moved
            .iter()
            .zip(&nn)
            .enumerate()
            .map(|(i, (m, &j))| (sq_dist(m, &tgt[j]), i))
            .collect();
        if keep < pairs.len() {
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            pairs.truncate(keep);
            pairs.sort_by_key(|p| p.1);
        }
        let s: Vec<[f64; 3]> = pairs.iter().map(|&(_, i)| src[i]).collect();
        let d: Vec<[f64; 3]> = pairs.iter().map(|&(_, i)| tgt[nn[i]]).collect();
        let mut next = kabsch(&s, &d)?;
        let mut rms = rms_residual(&next, &s, &d);
        // guard the monotone sequence against round-off in the solver
        let prev_rms = rms_residual(&current, &s, &d);
        if rms > prev_rms {
            next = current;
            rms = prev_rms;
        }
        current = next;
        let improvement = residuals.last().map(|&last| last - rms);
        residuals.push(rms);
        if let Some(imp) = improvement {
            if imp < params.tol {
                break;
            }
        }
        if rms == 0.0 {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        residuals,
    })
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn rms_residual(t: &RigidTransform, src: &[[f64; 3]], dst: &[[f64; 3]]) -> f64 {
    let sum: f64 = src.iter().zip(dst).map(|(s, d)| sq_dist(&t.apply_point(s), d)).sum();
    (sum / src.len() as f64).sqrt()
}
