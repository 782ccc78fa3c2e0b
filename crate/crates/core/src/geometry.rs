//! Rigid-body math shared by the navigation and manipulation layers.
//!
//! Rotations are stored as unit quaternions with a canonical sign (`w >= 0`)
//! so that two poses describing the same transform compare equal. The 6D
//! representation (first two rotation-matrix columns) is only used at the
//! policy observation boundary.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the raw quaternion norm accepted when constructing a pose.
const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate 6D rotation: columns are too short or parallel")]
    DegenerateRotation6D,
    #[error("alignment needs at least one correspondence")]
    EmptyCorrespondences,
    #[error("invalid quaternion (w={w}, x={x}, y={y}, z={z})")]
    InvalidQuaternion { w: f64, x: f64, y: f64, z: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Flips the quaternion into the `w >= 0` hemisphere.
pub fn canonicalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// A rigid transform in SE(3): rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3Pose {
    position: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Default for SE3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            rotation: canonicalize(renormalize(rotation)),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), rotation)
    }

    /// Builds a pose from raw `[x, y, z]` and `[w, x, y, z]` arrays, as found
    /// in trajectory and calibration files. The quaternion must be close to
    /// unit norm; it is renormalized and canonicalized.
    pub fn from_arrays(p: [f64; 3], q_wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("position"));
        }
        let [w, x, y, z] = q_wxyz;
        let raw = Quaternion::new(w, x, y, z);
        let norm = raw.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(GeometryError::InvalidQuaternion { w, x, y, z });
        }
        Ok(Self::new(
            Vector3::new(p[0], p[1], p[2]),
            UnitQuaternion::from_quaternion(raw),
        ))
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn position_array(&self) -> [f64; 3] {
        [self.position.x, self.position.y, self.position.z]
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// `self` followed by `other`, i.e. the homogeneous product `self * other`.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose::new(
            self.rotation * other.position + self.position,
            self.rotation * other.rotation,
        )
    }

    pub fn inverse(&self) -> SE3Pose {
        let inv = self.rotation.inverse();
        SE3Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }
}

/// Pose as stored on disk: position and a `[w, x, y, z]` quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub p: [f64; 3],
    pub q: [f64; 4],
}

impl PoseJson {
    pub fn to_pose(&self) -> Result<SE3Pose, GeometryError> {
        SE3Pose::from_arrays(self.p, self.q)
    }

    pub fn from_pose(pose: &SE3Pose) -> Self {
        Self {
            p: pose.position_array(),
            q: pose.quaternion_wxyz(),
        }
    }
}

/// Free-function form of [`SE3Pose::compose`].
pub fn se3_compose(a: &SE3Pose, b: &SE3Pose) -> SE3Pose {
    a.compose(b)
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(q.into_inner())
}

/// Rotation angle of `r1 * r2^T`, in `[0, pi]`.
///
/// Evaluated from the quaternion chord as `4 atan2(|q1 - q2|, |q1 + q2|)`
/// over the nearer of `±q2`, which equals `acos((tr(R1 R2^T) - 1) / 2)`
/// but is well conditioned everywhere and exactly zero for equal inputs.
pub fn geodesic_angle(r1: &UnitQuaternion<f64>, r2: &UnitQuaternion<f64>) -> f64 {
    let a = r1.quaternion().coords;
    let b = r2.quaternion().coords;
    let minus = (a - b).norm();
    let plus = (a + b).norm();
    let angle = 4.0 * minus.min(plus).atan2(minus.max(plus));
    angle.min(PI)
}

/// Spherical interpolation along the shortest arc. `u = 0` gives `r1`,
/// `u = 1` gives `r2`.
pub fn slerp(r1: &UnitQuaternion<f64>, r2: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    if u <= 0.0 {
        return *r1;
    }
    if u >= 1.0 {
        return *r2;
    }
    let a = r1.into_inner();
    let mut b = r2.into_inner();
    let mut dot = a.coords.dot(&b.coords);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 1.0 - 1e-12 {
        a.coords * (1.0 - u) + b.coords * u
    } else {
        let half = dot.min(1.0).acos();
        let sin_half = half.sin();
        let wa = ((1.0 - u) * half).sin() / sin_half;
        let wb = (u * half).sin() / sin_half;
        a.coords * wa + b.coords * wb
    };
    canonicalize(UnitQuaternion::from_quaternion(Quaternion::from(coords)))
}

pub fn lerp3(p1: &Vector3<f64>, p2: &Vector3<f64>, u: f64) -> Vector3<f64> {
    if u <= 0.0 {
        return *p1;
    }
    if u >= 1.0 {
        return *p2;
    }
    p1 + (p2 - p1) * u
}

/// First two columns of a rotation matrix, column-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn from_rotation(r: &UnitQuaternion<f64>) -> Self {
        let m = r.to_rotation_matrix().into_inner();
        Rot6D([
            m[(0, 0)],
            m[(1, 0)],
            m[(2, 0)],
            m[(0, 1)],
            m[(1, 1)],
            m[(2, 1)],
        ])
    }

    /// Gram-Schmidt decode to an orthonormal, right-handed matrix.
    pub fn to_matrix(&self) -> Result<Matrix3<f64>, GeometryError> {
        let v = &self.0;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite("6D rotation"));
        }
        let a1 = Vector3::new(v[0], v[1], v[2]);
        let a2 = Vector3::new(v[3], v[4], v[5]);
        let n1 = a1.norm();
        let n2 = a2.norm();
        if n1 <= 1e-6 || n2 <= 1e-6 {
            return Err(GeometryError::DegenerateRotation6D);
        }
        // |sin| of the angle between the two columns
        if a1.cross(&a2).norm() / (n1 * n2) <= 1e-6 {
            return Err(GeometryError::DegenerateRotation6D);
        }
        let b1 = a1 / n1;
        let u2 = a2 - b1 * b1.dot(&a2);
        let b2 = u2.normalize();
        let b3 = b1.cross(&b2);
        Ok(Matrix3::from_columns(&[b1, b2, b3]))
    }

    pub fn to_rotation(&self) -> Result<UnitQuaternion<f64>, GeometryError> {
        let m = self.to_matrix()?;
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Ok(canonicalize(UnitQuaternion::from_rotation_matrix(&rot)))
    }
}

pub fn rot_to_6d(r: &UnitQuaternion<f64>) -> Rot6D {
    Rot6D::from_rotation(r)
}

pub fn rot_from_6d(v: &Rot6D) -> Result<UnitQuaternion<f64>, GeometryError> {
    v.to_rotation()
}

/// Planar rigid transform: rotate by `theta`, then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform2D {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Transform2D {
    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            tx,
            ty,
        }
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * p.x - s * p.y + self.tx, s * p.x + c * p.y + self.ty)
    }
}

/// Closed-form least-squares planar alignment of `source -> target` pairs.
///
/// Returns the transform minimizing `sum |R s_i + t - t_i|^2` and the
/// root-mean-square residual. With a single pair the rotation is
/// unobservable and the result is a pure translation.
pub fn rigid_align_2d(
    pairs: &[(Vector2<f64>, Vector2<f64>)],
) -> Result<(Transform2D, f64), GeometryError> {
    if pairs.is_empty() {
        return Err(GeometryError::EmptyCorrespondences);
    }
    let n = pairs.len() as f64;
    let (sum_s, sum_t) = pairs
        .iter()
        .fold((Vector2::zeros(), Vector2::zeros()), |(a, b), (s, t)| {
            (a + s, b + t)
        });
    let cs = sum_s / n;
    let ct = sum_t / n;

    let theta = if pairs.len() == 1 {
        0.0
    } else {
        let (mut cross, mut dot) = (0.0, 0.0);
        for (s, t) in pairs {
            let a = s - cs;
            let b = t - ct;
            dot += a.x * b.x + a.y * b.y;
            cross += a.x * b.y - a.y * b.x;
        }
        if cross == 0.0 && dot == 0.0 {
            0.0
        } else {
            cross.atan2(dot)
        }
    };
    let (s, c) = theta.sin_cos();
    let rotated_cs = Vector2::new(c * cs.x - s * cs.y, s * cs.x + c * cs.y);
    let t = ct - rotated_cs;
    let transform = Transform2D::new(theta, t.x, t.y);

    let sq: f64 = pairs
        .iter()
        .map(|(s, t)| (transform.apply(s) - t).norm_squared())
        .sum();
    Ok((transform, (sq / n).sqrt()))
}
