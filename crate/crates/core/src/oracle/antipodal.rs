use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::error::{Error, Result};
use crate::geom::{UnitVec3, Vec3};

/// A point on an object surface with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub normal: UnitVec3,
    pub object_id: u32,
}

/// One area-weighted surface sample over all objects, `None` for an empty
/// scene.
pub fn surface_sample<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Option<SurfaceSample> {
    let areas: Vec<f64> = scene.objects.iter().map(|o| o.shape.area()).collect();
    let total: f64 = areas.iter().sum();
    if scene.objects.is_empty() || !(total > 0.0) {
        return None;
    }
    let mut pick = rng.random_range(0.0..total);
    let mut chosen = scene.objects.len() - 1;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a {
            chosen = i;
            break;
        }
        pick -= a;
    }
    let obj = &scene.objects[chosen];
    let (p, n) = obj.shape.sample_surface(rng);
    Some(SurfaceSample {
        point: obj.pose.transform_point(&p.into()).coords,
        normal: UnitVec3::new_normalize(obj.pose.rotation * n),
        object_id: obj.id,
    })
}

pub fn surface_samples<R: Rng + ?Sized>(scene: &Scene, n: usize, rng: &mut R) -> Vec<SurfaceSample> {
    (0..n).map_while(|_| surface_sample(scene, rng)).collect()
}

/// Product of the absolute cosines between the baseline and both normals.
pub fn antipodal_quality(c1: &Vec3, c2: &Vec3, n1: &Vec3, n2: &Vec3) -> Result<f64> {
    let d = c2 - c1;
    let len = d.norm();
    if len < 1e-9 {
        return Err(Error::invalid("c2", "contact points coincide"));
    }
    let b = d / len;
    let cos1 = (b.dot(n1) / n1.norm()).abs();
    let cos2 = (b.dot(n2) / n2.norm()).abs();
    Ok((cos1 * cos2).min(1.0))
}

/// The exit point of the inward ray from `s` through its own object, if it
/// lies within `w_max`.
pub fn find_opposing_contact(scene: &Scene, s: &SurfaceSample, w_max: f64) -> Option<(Vec3, UnitVec3)> {
    let obj = scene.object(s.object_id)?;
    let d = -s.normal.into_inner();
    let eps = 1e-7;
    let exit = obj
        .crossings(&s.point, &d)
        .into_iter()
        .find(|c| c.t > eps && c.normal.dot(&d) > 0.0)?;
    if exit.t > w_max {
        return None;
    }
    Some((s.point + d * exit.t, UnitVec3::new_normalize(exit.normal)))
}
