use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{Isometry3, Translation3, UnitQuaternion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::collision::OrientedBox;
use super::mesh::TriMesh;
use super::scene::{Bin, Scene, SceneObject};
use super::shape::Shape;
use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Box,
    Sphere,
    Cylinder,
    Prism,
}

/// What objects a scene may contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapePool {
    pub kinds: Vec<ShapeKind>,
    /// Range of half sizes (half extents, radii, half heights) in meters.
    pub min_half: f64,
    pub max_half: f64,
}

impl ShapePool {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::invalid("shape_pool", "no shape kinds"));
        }
        if !(self.min_half > 0.0 && self.min_half <= self.max_half) {
            return Err(Error::invalid("shape_pool", "need 0 < min_half <= max_half"));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Shape {
        let kind = self.kinds[rng.random_range(0..self.kinds.len())];
        let mut size = || rng.random_range(self.min_half..=self.max_half);
        match kind {
            ShapeKind::Box => Shape::Box {
                half_extents: Vec3::new(size(), size(), size()),
            },
            ShapeKind::Sphere => Shape::Sphere { radius: size() },
            ShapeKind::Cylinder => Shape::Cylinder {
                radius: size(),
                half_height: size(),
            },
            ShapeKind::Prism => {
                let (r, h) = (size(), size());
                let sides = rng.random_range(5..=8);
                Shape::Mesh(Arc::new(TriMesh::prism(sides, r, h)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Easy,
    Medium,
    Challenging,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Easy, Preset::Medium, Preset::Challenging];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Easy => "easy",
            Preset::Medium => "medium",
            Preset::Challenging => "challenging",
        }
    }

    /// Inclusive object-count range.
    pub fn object_range(self) -> (usize, usize) {
        match self {
            Preset::Easy => (3, 5),
            Preset::Medium => (8, 15),
            Preset::Challenging => (20, 35),
        }
    }

    pub fn pool(self) -> ShapePool {
        let kinds = match self {
            Preset::Easy => vec![ShapeKind::Box, ShapeKind::Sphere],
            Preset::Medium | Preset::Challenging => {
                vec![ShapeKind::Box, ShapeKind::Sphere, ShapeKind::Cylinder, ShapeKind::Prism]
            }
        };
        ShapePool {
            kinds,
            min_half: 0.015,
            max_half: 0.035,
        }
    }

    pub fn noisy_depth(self) -> bool {
        self == Preset::Challenging
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid("preset", format!("unknown preset '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementParams {
    pub step: f64,
    pub tolerance: f64,
    /// Gap kept between objects; also the surface probe spacing for
    /// curved shapes.
    pub clearance: f64,
    pub max_tries: usize,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self {
            step: 0.002,
            tolerance: 1e-4,
            clearance: 0.002,
            max_tries: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub requested: usize,
    pub placed: usize,
    /// Indices (in draw order) of objects that found no valid pose.
    pub skipped: Vec<usize>,
}

/// Conservative overlap test: true whenever the solids come closer than
/// `clearance`, possibly also for gaps slightly above it.
pub fn objects_overlap(a: &SceneObject, b: &SceneObject, clearance: f64) -> bool {
    let gap = (a.center() - b.center()).norm() - a.bounding_radius() - b.bounding_radius();
    if gap > clearance {
        return false;
    }
    match (&a.shape, &b.shape) {
        (Shape::Sphere { radius }, _) => b.signed_distance(&a.center()) < radius + clearance,
        (_, Shape::Sphere { radius }) => a.signed_distance(&b.center()) < radius + clearance,
        (Shape::Box { half_extents: ha }, Shape::Box { half_extents: hb }) => {
            let grown = OrientedBox {
                center: a.center(),
                rotation: a.pose.rotation.to_rotation_matrix(),
                half: ha.add_scalar(clearance),
            };
            grown.intersects(&OrientedBox {
                center: b.center(),
                rotation: b.pose.rotation.to_rotation_matrix(),
                half: *hb,
            })
        }
        _ => probe_overlap(a, b, clearance) || probe_overlap(b, a, clearance),
    }
}

fn probe_overlap(a: &SceneObject, b: &SceneObject, clearance: f64) -> bool {
    let (cb, rb) = (b.center(), b.bounding_radius() + clearance);
    a.world_probes(clearance)
        .iter()
        .filter(|p| (*p - cb).norm() < rb)
        .any(|p| b.signed_distance(p) < clearance)
}

fn resting_rotation<R: Rng + ?Sized>(shape: &Shape, rng: &mut R) -> UnitQuaternion<f64> {
    let tilt = match shape {
        Shape::Sphere { .. } => UnitQuaternion::from_euler_angles(rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..PI), 0.0),
        // one of the three box axes points up
        Shape::Box { .. } => match rng.random_range(0..3) {
            0 => UnitQuaternion::identity(),
            1 => UnitQuaternion::from_euler_angles(FRAC_PI_2, 0.0, 0.0),
            _ => UnitQuaternion::from_euler_angles(0.0, FRAC_PI_2, 0.0),
        },
        // standing or lying on the side
        Shape::Cylinder { .. } | Shape::Mesh(_) => {
            if rng.random_bool(0.5) {
                UnitQuaternion::identity()
            } else {
                UnitQuaternion::from_euler_angles(FRAC_PI_2, 0.0, 0.0)
            }
        }
    };
    UnitQuaternion::from_euler_angles(0.0, 0.0, rng.random_range(0.0..2.0 * PI)) * tilt
}

fn with_height(obj: &SceneObject, z: f64) -> SceneObject {
    let mut o = obj.clone();
    o.pose.translation.vector.z = z;
    o
}

/// Lowers `obj` from above the pile until it rests on the floor or on
/// another object. `None` when the start pose already overlaps.
fn lower(obj: &SceneObject, placed: &[SceneObject], params: &PlacementParams) -> Option<SceneObject> {
    let free = |z: f64| {
        let o = with_height(obj, z);
        !placed.iter().any(|p| objects_overlap(&o, p, params.clearance))
    };
    let floor_z = obj.center().z - obj.bottom();
    let r = obj.bounding_radius();
    let xy = obj.center().xy();
    let top = placed
        .iter()
        .filter(|p| (p.center().xy() - xy).norm() < r + p.bounding_radius() + params.clearance)
        .map(|p| p.center().z + p.bounding_radius())
        .fold(0.0, f64::max);
    let mut z = floor_z.max(top + r + params.clearance + params.step);
    if !free(z) {
        return None;
    }
    loop {
        let next = z - params.step;
        if next <= floor_z {
            if free(floor_z) {
                z = floor_z;
            } else {
                z = bisect(z, floor_z, &free, params.tolerance);
            }
            break;
        }
        if !free(next) {
            z = bisect(z, next, &free, params.tolerance);
            break;
        }
        z = next;
    }
    Some(with_height(obj, z))
}

/// Narrows `[blocked, ok]` to `tol`, returning the free end.
fn bisect(mut ok: f64, mut blocked: f64, free: &dyn Fn(f64) -> bool, tol: f64) -> f64 {
    while (ok - blocked).abs() > tol {
        let mid = 0.5 * (ok + blocked);
        if free(mid) {
            ok = mid;
        } else {
            blocked = mid;
        }
    }
    ok
}

/// Quasi-static clutter: each object gets a random footprint position and
/// yaw, is lowered until it touches the floor or the pile, and is redrawn
/// when the pose is invalid.
pub fn make_scene(
    id: impl Into<String>,
    seed: u64,
    n_objects: usize,
    pool: &ShapePool,
    bin: &Bin,
    params: &PlacementParams,
) -> Result<(Scene, PlacementReport)> {
    pool.validate()?;
    bin.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene::empty(id, *bin);
    let mut report = PlacementReport {
        requested: n_objects,
        ..Default::default()
    };
    for index in 0..n_objects {
        let mut done = false;
        for _ in 0..params.max_tries {
            let shape = pool.draw(&mut rng);
            let rot = resting_rotation(&shape, &mut rng);
            let r = shape.bounding_radius();
            let (hx, hy) = (bin.length / 2.0 - r, bin.width / 2.0 - r);
            if hx <= 0.0 || hy <= 0.0 {
                continue;
            }
            let (x, y) = (rng.random_range(-hx..=hx), rng.random_range(-hy..=hy));
            let candidate = SceneObject {
                id: index as u32 + 1,
                shape,
                pose: Isometry3::from_parts(Translation3::new(x, y, 0.0), rot),
            };
            let candidate = with_height(&candidate, -candidate.bottom());
            let Some(rested) = lower(&candidate, &scene.objects, params) else {
                continue;
            };
            let top = rested.center().z + rested.bounding_radius();
            if top > bin.height {
                continue;
            }
            scene.objects.push(rested);
            done = true;
            break;
        }
        if done {
            report.placed += 1;
        } else {
            report.skipped.push(index);
        }
    }
    Ok((scene, report))
}

/// Object count for scene `index` of a preset, drawn from its range.
pub fn preset_count(preset: Preset, seed: u64) -> usize {
    let (lo, hi) = preset.object_range();
    ChaCha8Rng::seed_from_u64(seed).random_range(lo..=hi)
}
