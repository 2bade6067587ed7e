#![allow(dead_code)]

use nalgebra::{Isometry3, Matrix3, UnitQuaternion};
use rand::Rng;

use psgrasp::geom::{approach_set, unit, GraspConfiguration, GraspPose, GripperModel, UnitVec3, Vec3};
use psgrasp::oracle::{Scene, SceneObject};
use psgrasp::scoring::{Observation, Prediction, Predictor};

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub fn random_unit<R: Rng>(rng: &mut R) -> UnitVec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return UnitVec3::new_normalize(v);
        }
    }
}

/// Uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = loop {
        let v = nalgebra::Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break nalgebra::Quaternion::from(v / n);
        }
    };
    UnitQuaternion::new_unchecked(q).to_rotation_matrix().into_inner()
}

pub fn sphere(id: u32, c: Vec3, r: f64) -> SceneObject {
    SceneObject {
        id,
        shape: psgrasp::oracle::Shape::Sphere { radius: r },
        pose: Isometry3::translation(c.x, c.y, c.z),
    }
}

/// A configuration with the default 18-approach fan around `b`.
pub fn fan_config(c: Vec3, b: Vec3, w: f64, q: f64, scores: Vec<f64>) -> GraspConfiguration {
    let b = unit(b).unwrap();
    let (lo, hi) = psgrasp::geom::DEFAULT_ANGLE_RANGE;
    let approaches = approach_set(&b, scores.len(), lo, hi)
        .unwrap()
        .into_iter()
        .map(|(_, a)| a)
        .collect();
    GraspConfiguration {
        c,
        b,
        approaches,
        collision_scores: scores,
        w,
        q,
    }
}

/// Returns the same hand-written configurations at every step.
pub struct Scripted {
    pub configs: Vec<GraspConfiguration>,
    pub calls: usize,
}

impl Predictor for Scripted {
    fn predict(&mut self, _obs: &Observation<'_>) -> psgrasp::Result<Prediction> {
        self.calls += 1;
        Ok(Prediction {
            label_grid: None,
            kappa_prime: vec![0.0; self.configs.len()],
            configs: self.configs.clone(),
        })
    }
}

/// A box in a hand frame, as world center, axes and half extents.
#[derive(Debug, Clone, Copy)]
pub struct HandBox {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half: Vec3,
}

impl HandBox {
    /// Points on the six faces at `spacing`, corners and edges included.
    pub fn surface_points(&self, spacing: f64) -> Vec<Vec3> {
        let mut pts = Vec::new();
        let steps = |h: f64| ((2.0 * h / spacing).ceil() as usize).max(1);
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let (nu, nv) = (steps(self.half[u]), steps(self.half[v]));
            for side in [-1.0, 1.0] {
                for i in 0..=nu {
                    for j in 0..=nv {
                        let mut local = Vec3::zeros();
                        local[axis] = side * self.half[axis];
                        local[u] = -self.half[u] + 2.0 * self.half[u] * i as f64 / nu as f64;
                        local[v] = -self.half[v] + 2.0 * self.half[v] * j as f64 / nv as f64;
                        pts.push(self.center + self.axes[0] * local.x + self.axes[1] * local.y + self.axes[2] * local.z);
                    }
                }
            }
        }
        pts
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let d = p - self.center;
        (0..3).all(|k| d.dot(&self.axes[k]).abs() < self.half[k])
    }

    pub fn radius(&self) -> f64 {
        self.half.norm()
    }
}

/// Fingers, palm and closing region of the hand rebuilt from the gripper
/// dimensions: fingers sit outside the opening plus clearance, the palm
/// spans the full opening behind them.
pub fn hand_boxes(pose: &GraspPose, gm: &GripperModel, clearance: f64) -> ([HandBox; 3], HandBox) {
    let m = pose.rotation.matrix();
    let axes = [m.column(0).into(), m.column(1).into(), m.column(2).into()];
    let at = |x: f64, y: f64, z: f64, half: Vec3| HandBox {
        center: pose.origin + axes[0] * x + axes[1] * y + axes[2] * z,
        axes,
        half,
    };
    let gap = pose.width / 2.0 + clearance;
    let ft = gm.finger_thickness;
    let fl = gm.finger_length;
    let finger = Vec3::new(ft / 2.0, gm.finger_width / 2.0, fl / 2.0);
    let palm_x = (gm.max_opening / 2.0 + clearance + ft).max(gap + ft);
    (
        [
            at(gap + ft / 2.0, 0.0, -fl / 2.0, finger),
            at(-gap - ft / 2.0, 0.0, -fl / 2.0, finger),
            at(
                0.0,
                0.0,
                -fl - gm.palm_depth / 2.0,
                Vec3::new(palm_x, gm.palm_height / 2.0, gm.palm_depth / 2.0),
            ),
        ],
        at(0.0, 0.0, -fl / 2.0, Vec3::new(gap, gm.finger_width / 2.0, fl / 2.0)),
    )
}

fn box_penetrates(b: &HandBox, o: &SceneObject, spacing: f64) -> bool {
    let c = o.center();
    let r = o.bounding_radius();
    if (b.center - c).norm() > b.radius() + r {
        return false;
    }
    if b.contains(&c) {
        return true;
    }
    b.surface_points(spacing)
        .iter()
        .filter(|p| (*p - c).norm() <= r)
        .any(|p| o.signed_distance(p) < 0.0)
}

/// Dense re-check: any lattice point of a hand box strictly inside an
/// object or a bin wall, or an object center inside a box, is a collision.
pub fn dense_collides(scene: &Scene, pose: &GraspPose, gm: &GripperModel, clearance: f64, target: u32, spacing: f64) -> bool {
    let (solid, closing) = hand_boxes(pose, gm, clearance);
    let walls = scene.bin.boxes();
    for b in solid.iter().chain(std::iter::once(&closing)) {
        for p in b.surface_points(spacing) {
            if walls.iter().any(|w| (0..3).all(|k| (p[k] - w.center[k]).abs() < w.half[k])) {
                return true;
            }
        }
    }
    scene.objects.iter().any(|o| {
        solid.iter().any(|b| box_penetrates(b, o, spacing)) || (o.id != target && box_penetrates(&closing, o, spacing))
    })
}

/// Outward normal of an object by central differences of its signed
/// distance.
pub fn sdf_normal(o: &SceneObject, p: &Vec3) -> Vec3 {
    let h = 1e-7;
    let mut g = Vec3::zeros();
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        g[k] = (o.signed_distance(&(p + e)) - o.signed_distance(&(p - e))) / (2.0 * h);
    }
    g.normalize()
}
