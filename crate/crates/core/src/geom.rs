//! Vectors, rotations and the parallel-jaw contact grasp.
//!
//! Frame conventions used throughout the crate:
//!
//! * world `+z` points up, away from the bin floor;
//! * the baseline `b` points from the first contact toward the second one;
//! * the approach `a` points from the hand toward the object, so a top-down
//!   grasp has `a ≈ (0, 0, -1)`;
//! * the gripper frame has `x = b`, `z = a`, `y = z × x`.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Matrix3, Quaternion, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;
pub type Rotation = Rotation3<f64>;
pub type Pose = Isometry3<f64>;

/// Reference used to build `b⊥` for the approach fan. Rotating `b⊥` through
/// `[π/2, 3π/2]` about `b` sweeps the lower half-turn, so every interior
/// approach points downward.
pub const APPROACH_REFERENCE: Vec3 = Vector3::new(0.0, 0.0, 1.0);

pub const DEFAULT_APPROACH_COUNT: usize = 18;
pub const DEFAULT_ANGLE_RANGE: (f64, f64) = (PI / 2.0, 3.0 * PI / 2.0);

const PARALLEL_THRESHOLD: f64 = 1.0 - 1e-6;

/// Normalizes `v`, failing on zero or non-finite input.
pub fn unit(v: Vec3) -> Result<UnitVec3> {
    let n = v.norm();
    if !n.is_finite() || n < 1e-12 {
        return Err(Error::invalid("vector", format!("cannot normalize {v:?}")));
    }
    Ok(Unit::new_unchecked(v / n))
}

/// Accepts `v` only if it is already unit length within `tol`.
pub fn checked_unit(v: Vec3, tol: f64) -> Result<UnitVec3> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > tol {
        return Err(Error::invalid(
            "unit vector",
            format!("norm {n} deviates from 1 by more than {tol}"),
        ));
    }
    Ok(Unit::new_unchecked(v))
}

/// Wraps a matrix as a rotation if `RᵀR = I` and `det R = 1` within `tol`.
pub fn checked_rotation(m: Matrix3<f64>, tol: f64) -> Result<Rotation> {
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    let det = m.determinant();
    if !(err <= tol) || !((det - 1.0).abs() <= tol) {
        return Err(Error::invalid(
            "rotation",
            format!("not orthonormal (|RᵀR - I| = {err:e}, det = {det})"),
        ));
    }
    Ok(Rotation3::from_matrix_unchecked(m))
}

/// Component of `reference` orthogonal to `b`, normalized.
///
/// When `reference` is (anti)parallel to `b` the fallback chain `(1,0,0)`,
/// then `(0,1,0)` is used instead.
pub fn gram_schmidt_perp(b: &UnitVec3, reference: &UnitVec3) -> UnitVec3 {
    let candidates = [
        reference.into_inner(),
        Vector3::x(),
        Vector3::y(),
    ];
    for r in candidates {
        if r.dot(b).abs() <= PARALLEL_THRESHOLD {
            let v = r - b.into_inner() * r.dot(b);
            return Unit::new_normalize(v);
        }
    }
    // b cannot be parallel to both x and y
    unreachable!("fallback references x and y are both parallel to {b:?}")
}

/// Evenly spaced fan angles with both endpoints included.
pub fn fan_angles(n_r: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n_r < 2 {
        return Err(Error::invalid("n_r", format!("need at least 2 approaches, got {n_r}")));
    }
    if !(lo < hi) {
        return Err(Error::invalid(
            "angle range",
            format!("lower bound {lo} must be below upper bound {hi}"),
        ));
    }
    let step = (hi - lo) / (n_r - 1) as f64;
    Ok((0..n_r).map(|i| lo + step * i as f64).collect())
}

/// The fan of approach directions around baseline `b`: `a_i = R(b, γ_i) b⊥`.
pub fn approach_set(b: &UnitVec3, n_r: usize, lo: f64, hi: f64) -> Result<Vec<(f64, UnitVec3)>> {
    let perp = gram_schmidt_perp(b, &Unit::new_unchecked(APPROACH_REFERENCE));
    let angles = fan_angles(n_r, lo, hi)?;
    Ok(angles
        .into_iter()
        .map(|g| {
            let r = Rotation3::from_axis_angle(b, g);
            (g, Unit::new_normalize(r * perp.into_inner()))
        })
        .collect())
}

/// Per-baseline rotation taking `b` to `b⊥`: a quarter turn about `b × b⊥`.
pub fn perp_rotation(b: &UnitVec3) -> Rotation {
    let perp = gram_schmidt_perp(b, &Unit::new_unchecked(APPROACH_REFERENCE));
    let axis = Unit::new_normalize(b.cross(&perp));
    Rotation3::from_axis_angle(&axis, PI / 2.0)
}

/// The composed maps `R_γi · R⊥` that carry `b` onto each approach direction.
pub fn approach_rotations(b: &UnitVec3, n_r: usize, lo: f64, hi: f64) -> Result<Vec<Rotation>> {
    let to_perp = perp_rotation(b);
    Ok(fan_angles(n_r, lo, hi)?
        .into_iter()
        .map(|g| Rotation3::from_axis_angle(b, g) * to_perp)
        .collect())
}

pub fn contact_pair(c: &Vec3, b: &UnitVec3, w: f64) -> Result<(Vec3, Vec3)> {
    if !(w > 0.0) {
        return Err(Error::invalid("w", format!("opening width must be positive, got {w}")));
    }
    Ok((*c, c + b.into_inner() * w))
}

/// A single parallel-jaw grasp `(c, b, a, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactGrasp {
    pub c: Vec3,
    pub b: UnitVec3,
    pub a: UnitVec3,
    pub w: f64,
}

impl ContactGrasp {
    pub fn new(c: Vec3, b: UnitVec3, a: UnitVec3, w: f64) -> Result<Self> {
        if !(w > 0.0) {
            return Err(Error::invalid("w", format!("opening width must be positive, got {w}")));
        }
        if a.dot(&b).abs() > 1e-6 {
            return Err(Error::invalid("a", "approach is not orthogonal to the baseline"));
        }
        Ok(Self { c, b, a, w })
    }
}

/// One contact with its whole fan of approach candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspConfiguration {
    pub c: Vec3,
    pub b: UnitVec3,
    pub approaches: Vec<UnitVec3>,
    pub collision_scores: Vec<f64>,
    pub w: f64,
    pub q: f64,
}

impl GraspConfiguration {
    pub fn grasp(&self, approach: usize) -> ContactGrasp {
        ContactGrasp {
            c: self.c,
            b: self.b,
            a: self.approaches[approach],
            w: self.w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.approaches.len() != self.collision_scores.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} approaches but {} collision scores",
                self.approaches.len(),
                self.collision_scores.len()
            )));
        }
        if self.approaches.iter().any(|a| a.dot(&self.b).abs() > 1e-6) {
            return Err(Error::invalid("approaches", "approach not orthogonal to baseline"));
        }
        Ok(())
    }
}

/// Box approximation of a parallel-jaw hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperModel {
    pub max_opening: f64,
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub finger_width: f64,
    pub palm_depth: f64,
    pub palm_height: f64,
    /// Distance from the fingertip plane back to the approach point `t`.
    pub hand_standoff: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self {
            max_opening: 0.08,
            finger_length: 0.05,
            finger_thickness: 0.01,
            finger_width: 0.02,
            palm_depth: 0.03,
            palm_height: 0.06,
            hand_standoff: 0.10,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.max_opening,
            self.finger_length,
            self.finger_thickness,
            self.finger_width,
            self.palm_depth,
            self.palm_height,
            self.hand_standoff,
        ];
        if fields.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("gripper", "all dimensions must be positive"));
        }
        Ok(())
    }
}

/// Hand placement for a grasp: gripper frame, fingertip midpoint and the
/// approach point `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub rotation: Rotation,
    pub origin: Vec3,
    pub approach_point: Vec3,
    pub width: f64,
}

impl GraspPose {
    pub fn baseline(&self) -> Vec3 {
        self.rotation.matrix().column(0).into()
    }

    pub fn approach(&self) -> Vec3 {
        self.rotation.matrix().column(2).into()
    }

    /// The same pose moved back by `distance` along `-a`.
    pub fn retreated(&self, distance: f64) -> Self {
        let shift = self.approach() * distance;
        Self {
            origin: self.origin - shift,
            approach_point: self.approach_point - shift,
            ..*self
        }
    }
}

pub fn grasp_pose(g: &ContactGrasp, gm: &GripperModel) -> Result<GraspPose> {
    if !(g.w > 0.0) {
        return Err(Error::invalid("w", "opening width must be positive"));
    }
    if g.w > gm.max_opening {
        return Err(Error::invalid(
            "w",
            format!("width {} exceeds gripper opening {}", g.w, gm.max_opening),
        ));
    }
    let x = g.b.into_inner();
    let z = g.a.into_inner();
    // re-orthogonalize so the frame is exact even for slightly skew inputs
    let z = (z - x * z.dot(&x)).normalize();
    let y = z.cross(&x);
    let rotation = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    let origin = g.c + x * (g.w / 2.0);
    Ok(GraspPose {
        rotation,
        origin,
        approach_point: origin - z * gm.hand_standoff,
        width: g.w,
    })
}

/// Rigid transform as stored in JSON files: translation plus a unit
/// quaternion in `[w, x, y, z]` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub translation: [f64; 3],
    pub quaternion: [f64; 4],
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose> {
        let [w, x, y, z] = self.quaternion;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("quaternion", format!("norm {n} is not 1")));
        }
        let [tx, ty, tz] = self.translation;
        Ok(Isometry3::from_parts(
            Translation3::new(tx, ty, tz),
            UnitQuaternion::from_quaternion(q),
        ))
    }
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        let t = p.translation.vector;
        Self {
            translation: [t.x, t.y, t.z],
            quaternion: [q.w, q.i, q.j, q.k],
        }
    }
}
