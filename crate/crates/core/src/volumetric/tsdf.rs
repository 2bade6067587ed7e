use nalgebra::Unit;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::geom::{Pose, UnitVec3, Vec3};

/// Pinhole intrinsics; pixel `(u, v)` has its center at image coordinate
/// `(u, v)`, so the ray through it is `((u − cx)/fx, (v − cy)/fy, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("intrinsics", "image dimensions must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("intrinsics", "focal lengths must be positive"));
        }
        Ok(())
    }

    /// Camera-frame ray direction (not normalized, `z = 1`) through a pixel.
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy, 1.0)
    }

    /// Nearest pixel for a camera-frame point in front of the camera.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize)> {
        if !(p.z > 0.0) {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).round();
        let v = (self.fy * p.y / p.z + self.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

/// Metric depth (camera z, meters), row-major; `0` marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("depth", "image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth buffer has {} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn at(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    pub spec: GridSpec,
    pub trunc: f64,
    /// Normalized signed distance in `[-1, 1]`; positive in front of surfaces.
    pub values: Vec<f64>,
    /// `1` where observed, `0` otherwise.
    pub weights: Vec<f64>,
}

impl TsdfGrid {
    pub fn observed(&self, idx: usize) -> bool {
        self.weights[idx] > 0.0
    }

    pub fn observed_count(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }
}

/// Projective single-view TSDF.
///
/// `cam_pose` maps camera coordinates to world coordinates. Fails only when
/// no voxel center projects into the image at all.
pub fn fuse_depth(
    depth: &DepthImage,
    intr: &Intrinsics,
    cam_pose: &Pose,
    spec: &GridSpec,
    trunc: f64,
) -> Result<TsdfGrid> {
    spec.validate()?;
    intr.validate()?;
    if !(trunc > 0.0) {
        return Err(Error::invalid("trunc", "truncation distance must be positive"));
    }
    if depth.width != intr.width || depth.height != intr.height {
        return Err(Error::ShapeMismatch(format!(
            "depth is {}x{} but intrinsics describe {}x{}",
            depth.width, depth.height, intr.width, intr.height
        )));
    }
    let world_to_cam = cam_pose.inverse();
    let per_voxel: Vec<(f64, f64, bool)> = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let p = world_to_cam.transform_point(&spec.center_of(idx).into());
            let Some((u, v)) = intr.project(&p.coords) else {
                return (1.0, 0.0, false);
            };
            let d = depth.at(u, v) as f64;
            if !(d > 0.0) || !d.is_finite() {
                return (1.0, 0.0, true);
            }
            let sdf = d - p.z;
            if sdf > -trunc {
                ((sdf / trunc).clamp(-1.0, 1.0), 1.0, true)
            } else {
                (1.0, 0.0, true)
            }
        })
        .collect();
    if !per_voxel.iter().any(|(_, _, in_view)| *in_view) {
        return Err(Error::NoObservation(
            "the voxel grid lies entirely outside the camera frustum".into(),
        ));
    }
    let (values, weights) = per_voxel.into_iter().map(|(v, w, _)| (v, w)).unzip();
    Ok(TsdfGrid {
        spec: *spec,
        trunc,
        values,
        weights,
    })
}

/// Surface normals at near-surface voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalGrid {
    pub spec: GridSpec,
    pub normals: Vec<Option<UnitVec3>>,
}

impl NormalGrid {
    pub fn present_count(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// Extracts normals from the TSDF gradient.
///
/// A voxel is near the surface when it is observed and either lies within
/// one voxel of the zero level (`|value|·trunc ≤ voxel_size`) or has an
/// observed face neighbor of opposite sign.
pub fn tsdf_normals(t: &TsdfGrid) -> Result<NormalGrid> {
    if t.observed_count() == 0 {
        return Err(Error::NoObservation("the TSDF has no observed voxels".into()));
    }
    let spec = t.spec;
    let n = spec.n as isize;
    let neighbor = |idx: usize, axis: usize, step: isize| -> Option<usize> {
        let mut c = spec.coords(idx).map(|x| x as isize);
        c[axis] += step;
        if c[axis] < 0 || c[axis] >= n {
            return None;
        }
        let j = spec.index(c[0] as usize, c[1] as usize, c[2] as usize);
        t.observed(j).then_some(j)
    };
    let normals = (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            if !t.observed(idx) {
                return None;
            }
            let v0 = t.values[idx];
            let mut near = v0.abs() * t.trunc <= spec.voxel_size;
            let mut grad = Vec3::zeros();
            for axis in 0..3 {
                let lo = neighbor(idx, axis, -1);
                let hi = neighbor(idx, axis, 1);
                for j in [lo, hi].into_iter().flatten() {
                    if v0 * t.values[j] < 0.0 {
                        near = true;
                    }
                }
                grad[axis] = match (lo, hi) {
                    (Some(l), Some(h)) => (t.values[h] - t.values[l]) / (2.0 * spec.voxel_size),
                    (None, Some(h)) => (t.values[h] - v0) / spec.voxel_size,
                    (Some(l), None) => (v0 - t.values[l]) / spec.voxel_size,
                    (None, None) => 0.0,
                };
            }
            if !near {
                return None;
            }
            let norm = grad.norm();
            (norm >= 1e-9).then(|| Unit::new_unchecked(grad / norm))
        })
        .collect();
    Ok(NormalGrid { spec, normals })
}
