use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::mesh::TriMesh;
use super::shape::{box_sdf, Crossing, Shape};
use crate::error::{Error, Result};
use crate::geom::{Pose, PoseRecord, Vec3};
use crate::volumetric::io::{read_json, write_json};

/// Open-top bin. The floor's upper face is the plane `z = 0`; the inner
/// cavity spans `[-L/2, L/2] × [-W/2, W/2] × [0, H]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub wall_thickness: f64,
}

impl Default for Bin {
    fn default() -> Self {
        Self {
            length: 0.6,
            width: 0.4,
            height: 0.28,
            wall_thickness: 0.01,
        }
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub center: Vec3,
    pub half: Vec3,
}

impl Aabb {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        box_sdf(&self.half, &(p - self.center))
    }
}

impl Bin {
    pub fn validate(&self) -> Result<()> {
        if [self.length, self.width, self.height, self.wall_thickness].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid("bin", "dimensions must be positive"));
        }
        Ok(())
    }

    /// Floor slab followed by the four walls.
    pub fn boxes(&self) -> [Aabb; 5] {
        let (l, w, h, t) = (self.length / 2.0, self.width / 2.0, self.height, self.wall_thickness);
        [
            Aabb {
                center: Vec3::new(0.0, 0.0, -t / 2.0),
                half: Vec3::new(l + t, w + t, t / 2.0),
            },
            Aabb {
                center: Vec3::new(l + t / 2.0, 0.0, h / 2.0),
                half: Vec3::new(t / 2.0, w + t, h / 2.0),
            },
            Aabb {
                center: Vec3::new(-l - t / 2.0, 0.0, h / 2.0),
                half: Vec3::new(t / 2.0, w + t, h / 2.0),
            },
            Aabb {
                center: Vec3::new(0.0, w + t / 2.0, h / 2.0),
                half: Vec3::new(l, t / 2.0, h / 2.0),
            },
            Aabb {
                center: Vec3::new(0.0, -w - t / 2.0, h / 2.0),
                half: Vec3::new(l, t / 2.0, h / 2.0),
            },
        ]
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.boxes()
            .iter()
            .map(|b| b.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    pub shape: Shape,
    pub pose: Pose,
}

impl SceneObject {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let local = self.pose.inverse_transform_point(&(*p).into());
        self.shape.signed_distance(&local.coords)
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation.vector
    }

    pub fn bounding_radius(&self) -> f64 {
        self.shape.bounding_radius()
    }

    /// Lowest world z over the object.
    pub fn bottom(&self) -> f64 {
        let local_up = self.pose.rotation.inverse_transform_vector(&Vec3::z());
        self.center().z + self.shape.support_min(&local_up)
    }

    /// Boundary crossings of the world line `o + t·d`, normals in world frame.
    pub fn crossings(&self, o: &Vec3, d: &Vec3) -> Vec<Crossing> {
        let lo = self.pose.inverse_transform_point(&(*o).into()).coords;
        let ld = self.pose.rotation.inverse_transform_vector(d);
        self.shape
            .crossings(&lo, &ld)
            .into_iter()
            .map(|c| Crossing {
                t: c.t,
                normal: self.pose.rotation * c.normal,
            })
            .collect()
    }

    pub fn world_probes(&self, spacing: f64) -> Vec<Vec3> {
        self.shape
            .probe_points(spacing)
            .into_iter()
            .map(|p| self.pose.transform_point(&p.into()).coords)
            .collect()
    }
}

/// What a ray hit first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHit {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    /// `None` for the bin.
    pub object: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub bin: Bin,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn empty(id: impl Into<String>, bin: Bin) -> Self {
        Self {
            id: id.into(),
            bin,
            objects: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bin.validate()?;
        let mut seen = HashSet::new();
        for o in &self.objects {
            o.shape.validate()?;
            if !seen.insert(o.id) {
                return Err(Error::invalid("scene", format!("duplicate object id {}", o.id)));
            }
            let c = o.center();
            if c.x.abs() > self.bin.length / 2.0 || c.y.abs() > self.bin.width / 2.0 {
                return Err(Error::invalid("scene", format!("object {} lies outside the bin footprint", o.id)));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn remove(&mut self, id: u32) -> Option<SceneObject> {
        let i = self.objects.iter().position(|o| o.id == id)?;
        Some(self.objects.remove(i))
    }

    /// Object whose surface is closest to `p` (most negative SDF first).
    pub fn nearest_object(&self, p: &Vec3) -> Option<(u32, f64)> {
        self.objects
            .iter()
            .map(|o| (o.id, o.signed_distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// First surface crossed by the ray `o + t·d`, `t > t_min`, `d` unit.
    pub fn raycast(&self, o: &Vec3, d: &Vec3, t_min: f64) -> Option<SceneHit> {
        let mut best: Option<SceneHit> = None;
        let mut consider = |t: f64, normal: Vec3, object: Option<u32>| {
            if t > t_min && best.is_none_or(|b| t < b.t) {
                best = Some(SceneHit {
                    t,
                    point: o + d * t,
                    normal,
                    object,
                });
            }
        };
        for b in self.bin.boxes() {
            let shape = Shape::Box { half_extents: b.half };
            for c in shape.crossings(&(o - b.center), d) {
                consider(c.t, c.normal, None);
            }
        }
        for obj in &self.objects {
            // bounding-sphere cull
            let rel = obj.center() - o;
            let along = rel.dot(d);
            let r = obj.bounding_radius();
            if rel.norm_squared() - along * along > r * r || along + r < t_min {
                continue;
            }
            for c in obj.crossings(o, d) {
                consider(c.t, c.normal, Some(obj.id));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ShapeRecord {
    Box {
        half_extents: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Either an OBJ `path` (relative to the scene file) or inline geometry.
    Mesh {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        vertices: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        faces: Vec<[usize; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
}

impl ShapeRecord {
    pub fn to_shape(&self, base_dir: &Path) -> Result<Shape> {
        let shape = match self {
            ShapeRecord::Box { half_extents } => Shape::Box {
                half_extents: Vec3::from(*half_extents),
            },
            ShapeRecord::Sphere { radius } => Shape::Sphere { radius: *radius },
            ShapeRecord::Cylinder { radius, half_height } => Shape::Cylinder {
                radius: *radius,
                half_height: *half_height,
            },
            ShapeRecord::Mesh {
                path,
                vertices,
                faces,
                scale,
            } => {
                let mesh = match path {
                    Some(p) => TriMesh::load_obj(&base_dir.join(p))?,
                    None => TriMesh::new(vertices.iter().map(|v| Vec3::from(*v)).collect(), faces.clone())?,
                };
                Shape::Mesh(Arc::new(mesh.scaled(scale.unwrap_or(1.0))))
            }
        };
        shape.validate()?;
        Ok(shape)
    }
}

impl From<&Shape> for ShapeRecord {
    fn from(s: &Shape) -> Self {
        match s {
            Shape::Box { half_extents } => ShapeRecord::Box {
                half_extents: [half_extents.x, half_extents.y, half_extents.z],
            },
            Shape::Sphere { radius } => ShapeRecord::Sphere { radius: *radius },
            Shape::Cylinder { radius, half_height } => ShapeRecord::Cylinder {
                radius: *radius,
                half_height: *half_height,
            },
            Shape::Mesh(m) => ShapeRecord::Mesh {
                path: None,
                vertices: m.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
                faces: m.faces.clone(),
                scale: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub shape: ShapeRecord,
    pub pose: PoseRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub scene_id: String,
    pub bin: Bin,
    pub objects: Vec<ObjectRecord>,
}

impl SceneFile {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            scene_id: scene.id.clone(),
            bin: scene.bin,
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    id: o.id,
                    shape: ShapeRecord::from(&o.shape),
                    pose: PoseRecord::from(&o.pose),
                })
                .collect(),
        }
    }

    pub fn to_scene(&self, base_dir: &Path) -> Result<Scene> {
        let objects = self
            .objects
            .iter()
            .map(|o| {
                Ok(SceneObject {
                    id: o.id,
                    shape: o.shape.to_shape(base_dir)?,
                    pose: o.pose.to_pose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene {
            id: self.scene_id.clone(),
            bin: self.bin,
            objects,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_json(path, &SceneFile::from_scene(scene))
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let file: SceneFile = read_json(path)?;
    let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    file.to_scene(&base).map_err(|e| match e {
        Error::InvalidArgument { .. } => Error::format(path, e.to_string()),
        other => other,
    })
}
