//! Point clouds, rigid transforms and the small amount of 3D geometry the
//! registration and segmentation stages share.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on unit normals and on rotation orthonormality.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point cloud must contain at least one point")]
    Empty,
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("normals length {normals} does not match point count {points}")]
    NormalCount { points: usize, normals: usize },
    #[error("normal {index} has norm {norm}, expected 1")]
    NotUnit { index: usize, norm: f64 },
    #[error("rotation is not a proper orthonormal matrix (det {det})")]
    NotRotation { det: f64 },
}

/// An ordered set of 3D points in the canonical object frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCloud", into = "RawCloud")]
pub struct PointCloud {
    id: String,
    points: Vec<[f64; 3]>,
    normals: Option<Vec<[f64; 3]>>,
}

#[derive(Serialize, Deserialize)]
struct RawCloud {
    id: String,
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normals: Option<Vec<[f64; 3]>>,
}

impl TryFrom<RawCloud> for PointCloud {
    type Error = GeometryError;

    fn try_from(raw: RawCloud) -> Result<Self, Self::Error> {
        PointCloud::with_normals(raw.id, raw.points, raw.normals)
    }
}

impl From<PointCloud> for RawCloud {
    fn from(c: PointCloud) -> Self {
        RawCloud {
            id: c.id,
            points: c.points,
            normals: c.normals,
        }
    }
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<[f64; 3]>) -> Result<Self, GeometryError> {
        Self::with_normals(id, points, None)
    }

    pub fn with_normals(
        id: impl Into<String>,
        points: Vec<[f64; 3]>,
        normals: Option<Vec<[f64; 3]>>,
    ) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        if let Some(index) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::NonFinite { index });
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(GeometryError::NormalCount {
                    points: points.len(),
                    normals: ns.len(),
                });
            }
            for (index, n) in ns.iter().enumerate() {
                let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(GeometryError::NotUnit { index, norm });
                }
            }
        }
        Ok(Self {
            id: id.into(),
            points,
            normals,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[[f64; 3]]> {
        self.normals.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false for a constructed cloud; present for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Reorders points (and normals) so that output index `i` holds input
    /// index `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.len(), "permutation length");
        Self {
            id: self.id.clone(),
            points: order.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| order.iter().map(|&i| ns[i]).collect()),
        }
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.points.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            c[0] += p[0];
            c[1] += p[1];
            c[2] += p[2];
        }
        [c[0] / n, c[1] / n, c[2] / n]
    }
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality and `det(R) = +1` within [`UNIT_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let det = rotation.determinant();
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let ortho_err = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !det.is_finite()
            || (det - 1.0).abs() > UNIT_TOLERANCE
            || ortho_err > UNIT_TOLERANCE
            || translation.iter().any(|v| !v.is_finite())
        {
            return Err(GeometryError::NotRotation { det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::from(t),
        }
    }

    /// Rotation of `angle` radians about the (normalized) `axis`, no translation.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(Vector3::from(axis));
        let rot = nalgebra::Rotation3::from_axis_angle(&axis, angle);
        Self {
            rotation: *rot.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn with_translation(mut self, t: [f64; 3]) -> Self {
        self.translation = Vector3::from(t);
        self
    }

    pub fn apply_point(&self, p: &[f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::from(*p) + self.translation;
        [v.x, v.y, v.z]
    }

    pub fn apply_vector(&self, v: &[f64; 3]) -> [f64; 3] {
        let r = self.rotation * Vector3::from(*v);
        [r.x, r.y, r.z]
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    /// Geodesic angle of the rotation part, in radians.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn rotation_rows(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RawTransform {
            rotation: self.rotation_rows(),
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawTransform::deserialize(d)?;
        let r = raw.rotation;
        let m = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        RigidTransform::new(m, Vector3::from(raw.translation)).map_err(serde::de::Error::custom)
    }
}

/// Moves every point by `t`; normals are rotated only. The id gains a `@xf` suffix.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        id: format!("{}@xf", cloud.id),
        points: cloud.points.iter().map(|p| t.apply_point(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
    }
}

/// Parameters that map a normalized cloud back to its source frame:
/// `original = normalized * scale + centroid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub centroid: [f64; 3],
    pub scale: f64,
}

/// Centers the cloud on its centroid and scales it so the farthest point has
/// norm 1. A cloud whose points all coincide keeps scale 1.
pub fn normalize_cloud(cloud: &PointCloud) -> (PointCloud, Normalization) {
    let centroid = cloud.centroid();
    let centered: Vec<[f64; 3]> = cloud
        .points
        .iter()
        .map(|p| [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]])
        .collect();
    let max_norm = centered
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .fold(0.0f64, f64::max);
    let scale = if max_norm > 0.0 { max_norm } else { 1.0 };
    let points = centered
        .into_iter()
        .map(|p| [p[0] / scale, p[1] / scale, p[2] / scale])
        .collect();
    (
        PointCloud {
            id: cloud.id.clone(),
            points,
            normals: cloud.normals.clone(),
        },
        Normalization { centroid, scale },
    )
}

/// Inverse of [`normalize_cloud`].
pub fn denormalize_cloud(cloud: &PointCloud, params: &Normalization) -> PointCloud {
    let c = params.centroid;
    let s = params.scale;
    PointCloud {
        id: cloud.id.clone(),
        points: cloud
            .points
            .iter()
            .map(|p| [p[0] * s + c[0], p[1] * s + c[1], p[2] * s + c[2]])
            .collect(),
        normals: cloud.normals.clone(),
    }
}
