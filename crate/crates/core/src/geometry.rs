//! SE(3) poses and rigid least-squares point-set alignment.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

/// A rigid motion stored as a unit quaternion plus a translation.
///
/// Composition follows the homogeneous-matrix convention: `a.compose(&b)`
/// is the transform `A·B`, i.e. `b` is applied first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation.into_inner()),
            translation,
        }
    }

    /// Builds a pose from a raw (possibly unnormalized) quaternion in
    /// `(w, x, y, z)` order. Returns `None` for a zero or non-finite quaternion.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64, translation: Vector3<f64>) -> Option<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || !translation.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Self {
            rotation: renormalize(q),
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self::new(rotation, translation)
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
        Self::new(
            UnitQuaternion::from_rotation_matrix(&rot),
            Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Quaternion coefficients in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize((self.rotation * other.rotation).into_inner()),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: renormalize(inv.into_inner()),
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Geodesic rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = self.rotation.to_rotation_matrix().to_homogeneous();
        m[(0, 3)] = self.translation.x;
        m[(1, 3)] = self.translation.y;
        m[(2, 3)] = self.translation.z;
        m
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

// Leaves already-unit quaternions bit-untouched so that parse/serialize
// round trips are exact.
fn renormalize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    }
}

/// The rigid transform mapping a source point set onto a reference set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    pub transform: Pose,
    pub residual_rmse: f64,
}

impl Serialize for AlignmentResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let t = self.transform.translation();
        let mut st = s.serialize_struct("AlignmentResult", 3)?;
        st.serialize_field("rotation_wxyz", &self.transform.wxyz())?;
        st.serialize_field("translation", &[t.x, t.y, t.z])?;
        st.serialize_field("residual_rmse", &self.residual_rmse)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for AlignmentResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            rotation_wxyz: [f64; 4],
            translation: [f64; 3],
            residual_rmse: f64,
        }
        let raw = Raw::deserialize(d)?;
        let [w, x, y, z] = raw.rotation_wxyz;
        let [tx, ty, tz] = raw.translation;
        let transform = Pose::from_wxyz(w, x, y, z, Vector3::new(tx, ty, tz))
            .ok_or_else(|| serde::de::Error::custom("invalid quaternion"))?;
        Ok(Self {
            transform,
            residual_rmse: raw.residual_rmse,
        })
    }
}

/// Root-mean-square of `‖reference_i − T(source_i)‖`.
pub fn alignment_rmse(transform: &Pose, reference: &[Vector3<f64>], source: &[Vector3<f64>]) -> f64 {
    let n = reference.len().min(source.len());
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = reference
        .iter()
        .zip(source)
        .map(|(r, s)| (r - transform.transform_point(s)).norm_squared())
        .sum();
    (sq / n as f64).sqrt()
}

/// Closed-form least-squares rigid alignment (rotation + translation, unit
/// scale) of `source` onto `reference` via SVD of the cross-covariance.
pub fn umeyama_align(reference: &[Vector3<f64>], source: &[Vector3<f64>]) -> Result<AlignmentResult, GeometryError> {
    if reference.len() != source.len() {
        return Err(GeometryError::DegenerateGeometry(format!(
            "point count mismatch: {} reference vs {} source",
            reference.len(),
            source.len()
        )));
    }
    let n = reference.len();
    if n < 3 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "need at least 3 points, got {n}"
        )));
    }

    let inv_n = 1.0 / n as f64;
    let mu_ref = reference.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_src = source.iter().sum::<Vector3<f64>>() * inv_n;

    let mut cov = Matrix3::zeros();
    for (r, s) in reference.iter().zip(source) {
        cov += (r - mu_ref) * (s - mu_src).transpose();
    }
    cov *= inv_n;

    check_spread(reference, &mu_ref, "reference")?;
    check_spread(source, &mu_src, "source")?;
    if reference == source {
        return Ok(AlignmentResult {
            transform: Pose::identity(),
            residual_rmse: 0.0,
        });
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => {
            return Err(GeometryError::DegenerateGeometry(
                "SVD of cross-covariance failed".into(),
            ))
        }
    };
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= f64::EPSILON || sv[1] <= 1e-10 * sv[0] {
        return Err(GeometryError::DegenerateGeometry(
            "cross-covariance has rank < 2".into(),
        ));
    }

    let mut d = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * v_t;
    let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
    let t = mu_ref - rot * mu_src;
    let transform = Pose::new(rot, t);
    Ok(AlignmentResult {
        transform,
        residual_rmse: alignment_rmse(&transform, reference, source),
    })
}

fn check_spread(points: &[Vector3<f64>], mean: &Vector3<f64>, which: &str) -> Result<(), GeometryError> {
    let mut scatter = Matrix3::zeros();
    for p in points {
        let c = p - mean;
        scatter += c * c.transpose();
    }
    let mut ev: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= f64::EPSILON || ev[1] <= 1e-12 * ev[0] {
        return Err(GeometryError::DegenerateGeometry(format!(
            "{which} points are coincident or collinear"
        )));
    }
    Ok(())
}
