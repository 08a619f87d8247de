use nalgebra::{Matrix3, Vector3};

use super::RegistrationError;
use crate::geometry::RigidTransform;

/// Relative singular-value floor below which the source spread is treated
/// as rank deficient.
const RANK_TOLERANCE: f64 = 1e-12;

fn centroid(pts: &[[f64; 3]]) -> Vector3<f64> {
    let mut c = Vector3::zeros();
    for p in pts {
        c += Vector3::from(*p);
    }
    c / pts.len() as f64
}

/// Least-squares proper rigid transform taking `src[i]` onto `dst[i]`.
///
/// Fails with [`RegistrationError::DegenerateCorrespondences`] for fewer
/// than three pairs or for collinear/coincident sources or targets.
pub fn kabsch(src: &[[f64; 3]], dst: &[[f64; 3]]) -> Result<RigidTransform, RegistrationError> {
    if src.len() != dst.len() {
        return Err(RegistrationError::LengthMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(RegistrationError::DegenerateCorrespondences(format!(
            "{} pairs, need at least 3",
            src.len()
        )));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let mut h = Matrix3::zeros();
    let mut ss = Matrix3::zeros();
    let mut sd = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let a = Vector3::from(*s) - cs;
        let b = Vector3::from(*d) - cd;
        h += a * b.transpose();
        ss += a * a.transpose();
        sd += b * b.transpose();
    }
    for (name, scatter) in [("source", ss), ("target", sd)] {
        let sv = scatter.symmetric_eigenvalues();
        let mut sv: Vec<f64> = sv.iter().map(|v| v.abs()).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
            return Err(RegistrationError::DegenerateCorrespondences(format!(
                "{name} points are collinear or coincident"
            )));
        }
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let v = v_t.transpose();
    // nalgebra sorts singular values descending; flipping the last column
    // handles reflections
    let sign = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if sign < 0.0 { -1.0 } else { 1.0 }));
    let rotation = v * fix * u.transpose();
    let rotation = orthonormalize(&rotation);
    let translation = cd - rotation * cs;
    RigidTransform::new(rotation, translation)
        .map_err(|e| RegistrationError::DegenerateCorrespondences(e.to_string()))
}

/// Polar re-projection onto SO(3) to wash out accumulated round-off.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        out = u * fix * v_t;
    }
    out
}

/// Sum of squared residuals `Σ |R s + t - d|²`.
pub fn sum_squared_residual(t: &RigidTransform, src: &[[f64; 3]], dst: &[[f64; 3]]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(s, d)| {
            let p = t.apply_point(s);
            (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2) + (p[2] - d[2]).powi(2)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn tetra() -> Vec<[f64; 3]> {
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    }

    #[test]
    fn identity_for_equal_sets() {
        let t = kabsch(&tetra(), &tetra()).unwrap();
        assert!((t.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation().norm() < 1e-12);
        assert!(sum_squared_residual(&t, &tetra(), &tetra()) < 1e-24);
    }

    #[test]
    fn recovers_known_motion() {
        let truth = RigidTransform::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_2).with_translation([1.0, 0.0, 0.0]);
        let dst: Vec<_> = tetra().iter().map(|p| truth.apply_point(p)).collect();
        let t = kabsch(&tetra(), &dst).unwrap();
        assert!((t.rotation() - truth.rotation()).abs().max() < 1e-9);
        assert!((t.translation() - truth.translation()).abs().max() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let line = vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]];
        assert!(matches!(kabsch(&line, &line), Err(RegistrationError::DegenerateCorrespondences(_))));
        let same = vec![[1.0, 2.0, 3.0]; 5];
        assert!(kabsch(&same, &same).is_err());
        assert!(kabsch(&tetra()[..2], &tetra()[..2]).is_err());
        assert!(matches!(kabsch(&tetra(), &tetra()[..3]), Err(RegistrationError::LengthMismatch { .. })));
    }

    #[test]
    fn planar_sets_are_fine() {
        let plane = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        let truth = RigidTransform::from_axis_angle([1.0, 1.0, 0.0], 0.4).with_translation([0.0, 2.0, 0.0]);
        let dst: Vec<_> = plane.iter().map(|p| truth.apply_point(p)).collect();
        let t = kabsch(&plane, &dst).unwrap();
        assert!((t.rotation() - truth.rotation()).abs().max() < 1e-9);
    }
}
