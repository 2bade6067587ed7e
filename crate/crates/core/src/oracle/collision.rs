use serde::{Deserialize, Serialize};

use super::scene::{Scene, SceneObject};
use super::shape::{box_sdf, Shape};
use crate::error::{Error, Result};
use crate::geom::{GraspPose, GripperModel, Rotation, Vec3};

/// Box with arbitrary orientation; `rotation` maps box axes to world axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub rotation: Rotation,
    pub half: Vec3,
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, half: Vec3) -> Self {
        Self {
            center,
            rotation: Rotation::identity(),
            half,
        }
    }

    pub fn axis(&self, k: usize) -> Vec3 {
        self.rotation.matrix().column(k).into()
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(p - self.center))
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.center + self.rotation * p
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        box_sdf(&self.half, &self.to_local(p))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let l = self.to_local(p);
        (0..3).all(|k| l[k].abs() <= self.half[k])
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half.norm()
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            *c = self.to_world(&self.half.component_mul(&s));
        }
        out
    }

    /// Separating-axis test over the 15 candidate axes. Touching counts as
    /// intersecting.
    pub fn intersects(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        let a: [Vec3; 3] = [self.axis(0), self.axis(1), self.axis(2)];
        let b: [Vec3; 3] = [other.axis(0), other.axis(1), other.axis(2)];
        let separated = |axis: Vec3| {
            let len = axis.norm();
            if len < 1e-12 {
                return false;
            }
            let l = axis / len;
            let ra: f64 = (0..3).map(|k| self.half[k] * a[k].dot(&l).abs()).sum();
            let rb: f64 = (0..3).map(|k| other.half[k] * b[k].dot(&l).abs()).sum();
            d.dot(&l).abs() > ra + rb
        };
        for k in 0..3 {
            if separated(a[k]) || separated(b[k]) {
                return false;
            }
        }
        for ai in &a {
            for bj in &b {
                if separated(ai.cross(bj)) {
                    return false;
                }
            }
        }
        true
    }

    /// Points on the box surface with grid spacing at most `spacing` on
    /// every face, so any surface point is within `spacing / √2` of one.
    pub fn surface_lattice(&self, spacing: f64) -> Vec<Vec3> {
        let counts = self.half.map(|h| ((2.0 * h / spacing).ceil() as usize).max(1));
        let coord = |k: usize, i: usize| -self.half[k] + 2.0 * self.half[k] * i as f64 / counts[k] as f64;
        let mut pts = Vec::new();
        for i in 0..=counts[0] {
            for j in 0..=counts[1] {
                for k in 0..=counts[2] {
                    let on_face = i == 0 || i == counts[0] || j == 0 || j == counts[1] || k == 0 || k == counts[2];
                    if on_face {
                        pts.push(self.to_world(&Vec3::new(coord(0, i), coord(1, j), coord(2, k))));
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionParams {
    /// Lattice spacing of the gripper-box probes for curved objects.
    pub probe_spacing: f64,
    /// Extra opening on each side while the hand moves in, before closing.
    pub finger_clearance: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            probe_spacing: 0.0045,
            finger_clearance: 0.005,
        }
    }
}

impl CollisionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.probe_spacing > 0.0) || !(self.finger_clearance >= 0.0) {
            return Err(Error::invalid("collision", "probe spacing must be positive, clearance non-negative"));
        }
        Ok(())
    }

    pub fn probe_margin(&self) -> f64 {
        self.probe_spacing / std::f64::consts::SQRT_2
    }
}

/// The hand as boxes in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperBoxes {
    pub fingers: [OrientedBox; 2],
    pub palm: OrientedBox,
    /// Region swept by the closing fingers.
    pub closing: OrientedBox,
}

impl GripperBoxes {
    pub fn solid(&self) -> [OrientedBox; 3] {
        [self.fingers[0], self.fingers[1], self.palm]
    }
}

pub fn gripper_boxes(pose: &GraspPose, gm: &GripperModel, clearance: f64) -> GripperBoxes {
    let r = pose.rotation;
    let frame = |local: Vec3, half: Vec3| OrientedBox {
        center: pose.origin + r * local,
        rotation: r,
        half,
    };
    let (fl, ft) = (gm.finger_length, gm.finger_thickness);
    let gap = pose.width / 2.0 + clearance;
    let finger_half = Vec3::new(ft / 2.0, gm.finger_width / 2.0, fl / 2.0);
    let palm_half_x = (gm.max_opening / 2.0 + clearance + ft).max(gap + ft);
    GripperBoxes {
        fingers: [
            frame(Vec3::new(gap + ft / 2.0, 0.0, -fl / 2.0), finger_half),
            frame(Vec3::new(-gap - ft / 2.0, 0.0, -fl / 2.0), finger_half),
        ],
        palm: frame(
            Vec3::new(0.0, 0.0, -fl - gm.palm_depth / 2.0),
            Vec3::new(palm_half_x, gm.palm_height / 2.0, gm.palm_depth / 2.0),
        ),
        closing: frame(
            Vec3::new(0.0, 0.0, -fl / 2.0),
            Vec3::new(gap, gm.finger_width / 2.0, fl / 2.0),
        ),
    }
}

fn object_box(o: &SceneObject, half: Vec3) -> OrientedBox {
    OrientedBox {
        center: o.center(),
        rotation: o.pose.rotation.to_rotation_matrix(),
        half,
    }
}

/// Conservative box-object overlap: never misses a true intersection;
/// curved non-spherical objects may report near misses within the probe
/// margin as contacts.
pub fn box_hits_object(b: &OrientedBox, o: &SceneObject, params: &CollisionParams) -> bool {
    let c = o.center();
    let r = o.bounding_radius();
    if b.signed_distance(&c) > r {
        return false;
    }
    match &o.shape {
        Shape::Sphere { radius } => b.signed_distance(&c) <= *radius,
        Shape::Box { half_extents } => b.intersects(&object_box(o, *half_extents)),
        Shape::Cylinder { .. } | Shape::Mesh(_) => {
            if b.contains(&c) {
                return true;
            }
            let margin = params.probe_margin();
            b.surface_lattice(params.probe_spacing)
                .iter()
                .filter(|p| (*p - c).norm() < r + margin)
                .any(|p| o.signed_distance(p) < margin)
        }
    }
}

pub fn box_hits_bin(b: &OrientedBox, scene: &Scene) -> bool {
    scene
        .bin
        .boxes()
        .iter()
        .any(|w| b.intersects(&OrientedBox::axis_aligned(w.center, w.half)))
}

/// True when the hand at `pose` collides. Fingers and palm may touch
/// nothing; the closing region may contain only the target object.
pub fn collision_check(
    scene: &Scene,
    pose: &GraspPose,
    gm: &GripperModel,
    target_id: Option<u32>,
    params: &CollisionParams,
) -> bool {
    let boxes = gripper_boxes(pose, gm, params.finger_clearance);
    let mut all = boxes.solid().to_vec();
    all.push(boxes.closing);
    if all.iter().any(|b| box_hits_bin(b, scene)) {
        return true;
    }
    scene.objects.iter().any(|o| {
        let solid_hit = boxes.solid().iter().any(|b| box_hits_object(b, o, params));
        solid_hit || (Some(o.id) != target_id && box_hits_object(&boxes.closing, o, params))
    })
}
