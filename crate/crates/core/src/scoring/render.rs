use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose, Vec3};
use crate::oracle::Scene;
use crate::volumetric::{DepthImage, Intrinsics};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Camera-to-world transform; the camera looks along its `+z`.
    pub pose: Pose,
}

impl Camera {
    /// 640×480 pinhole looking straight down from `height` above the bin
    /// floor center.
    pub fn top_down(height: f64) -> Self {
        let r = Rotation3::from_matrix_unchecked(Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)));
        Self {
            intrinsics: Intrinsics {
                width: 640,
                height: 480,
                fx: 600.0,
                fy: 600.0,
                cx: 319.5,
                cy: 239.5,
            },
            pose: Isometry3::from_parts(Translation3::new(0.0, 0.0, height), UnitQuaternion::from_rotation_matrix(&r)),
        }
    }
}

impl Default for Camera {
    fn default() -> Self {
        Self::top_down(1.0)
    }
}

/// Ray-cast depth of the scene; pixels that see nothing are `0`.
pub fn render_depth(scene: &Scene, camera: &Camera) -> DepthImage {
    let intr = &camera.intrinsics;
    let origin = camera.pose.translation.vector;
    let data: Vec<f32> = (0..intr.width * intr.height)
        .into_par_iter()
        .map(|idx| {
            let (u, v) = (idx % intr.width, idx / intr.width);
            let ray = intr.ray(u, v);
            let len = ray.norm();
            let dir = camera.pose.rotation * (ray / len);
            match scene.raycast(&origin, &dir, 0.0) {
                Some(hit) => (hit.t / len) as f32,
                None => 0.0,
            }
        })
        .collect();
    DepthImage::new(intr.width, intr.height, data).expect("buffer sized from intrinsics")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthNoise {
    /// Standard deviation of the additive Gaussian, meters.
    pub sigma: f64,
    /// Fraction of pixels set invalid.
    pub dropout: f64,
}

impl Default for DepthNoise {
    fn default() -> Self {
        Self {
            sigma: 0.001,
            dropout: 0.005,
        }
    }
}

impl DepthNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::invalid("noise", "sigma must be non-negative and dropout in [0, 1]"));
        }
        Ok(())
    }

    pub fn apply(&self, depth: &mut DepthImage, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.sigma).expect("validated sigma");
        for d in depth.data.iter_mut() {
            let drop = rng.random_bool(self.dropout);
            let e = normal.sample(&mut rng);
            if *d > 0.0 {
                *d = if drop { 0.0 } else { (*d as f64 + e).max(0.0) as f32 };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Bin, SceneObject, Shape};

    #[test]
    fn floor_and_sphere_depths() {
        let mut s = Scene::empty("r", Bin::default());
        s.objects.push(SceneObject {
            id: 1,
            shape: Shape::Sphere { radius: 0.05 },
            pose: Isometry3::translation(0.0, 0.0, 0.05),
        });
        let cam = Camera::default();
        let d = render_depth(&s, &cam);
        assert!((d.at(319, 239) - 0.9).abs() < 1e-4);
        // bare floor, 0.17 m off center
        assert!((d.at(419, 239) - 1.0).abs() < 1e-6);
        // outside the bin footprint the ray passes the wall tops or hits nothing
        assert!(d.at(0, 0) == 0.0 || d.at(0, 0) > 0.7);
    }

    #[test]
    fn noise_is_seeded() {
        let base = DepthImage::new(10, 10, vec![1.0; 100]).unwrap();
        let noise = DepthNoise {
            sigma: 0.001,
            dropout: 0.1,
        };
        let (mut a, mut b) = (base.clone(), base.clone());
        noise.apply(&mut a, 4);
        noise.apply(&mut b, 4);
        assert_eq!(a, b);
        assert!(a.data.contains(&0.0));
        assert!(a.data.iter().all(|d| *d == 0.0 || (d - 1.0).abs() < 0.01));
    }
}
