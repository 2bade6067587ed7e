use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use super::mesh::TriMesh;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Object geometry in its local frame. Cylinders and prisms have their axis
/// along local z.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box { half_extents: Vec3 },
    Sphere { radius: f64 },
    Cylinder { radius: f64, half_height: f64 },
    Mesh(Arc<TriMesh>),
}

/// A boundary crossing of a line, with the outward normal there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub t: f64,
    pub normal: Vec3,
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0),
            Shape::Sphere { radius } => *radius > 0.0,
            Shape::Cylinder { radius, half_height } => *radius > 0.0 && *half_height > 0.0,
            Shape::Mesh(m) => !m.faces.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("shape", format!("degenerate dimensions in {self:?}")))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Shape::Box { .. } => "box",
            Shape::Sphere { .. } => "sphere",
            Shape::Cylinder { .. } => "cylinder",
            Shape::Mesh(_) => "mesh",
        }
    }

    /// Radius of a sphere about the local origin enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Box { half_extents } => half_extents.norm(),
            Shape::Sphere { radius } => *radius,
            Shape::Cylinder { radius, half_height } => radius.hypot(*half_height),
            Shape::Mesh(m) => m.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Box { half_extents } => box_sdf(half_extents, p),
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Cylinder { radius, half_height } => {
                let dx = p.xy().norm() - radius;
                let dz = p.z.abs() - half_height;
                dx.max(dz).min(0.0) + dx.max(0.0).hypot(dz.max(0.0))
            }
            Shape::Mesh(m) => m.signed_distance(p),
        }
    }

    /// Lowest value of `dir · x` over the solid, for a unit `dir`.
    pub fn support_min(&self, dir: &Vec3) -> f64 {
        match self {
            Shape::Box { half_extents } => -(half_extents.component_mul(dir)).abs().sum(),
            Shape::Sphere { radius } => -radius,
            Shape::Cylinder { radius, half_height } => {
                -(half_height * dir.z.abs() + radius * dir.xy().norm())
            }
            Shape::Mesh(m) => m.vertices.iter().map(|v| v.dot(dir)).fold(f64::INFINITY, f64::min),
        }
    }

    /// All crossings of the line `o + t·d` (unit `d`) with the boundary,
    /// sorted by `t`.
    pub fn crossings(&self, o: &Vec3, d: &Vec3) -> Vec<Crossing> {
        let mut out = match self {
            Shape::Sphere { radius } => {
                let b = o.dot(d);
                let c = o.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return Vec::new();
                }
                let s = disc.sqrt();
                [-b - s, -b + s]
                    .into_iter()
                    .map(|t| Crossing {
                        t,
                        normal: (o + d * t) / *radius,
                    })
                    .collect()
            }
            Shape::Box { half_extents } => slab_crossings(half_extents, o, d),
            Shape::Cylinder { radius, half_height } => cylinder_crossings(*radius, *half_height, o, d),
            Shape::Mesh(m) => m
                .ray_crossings(o, d)
                .into_iter()
                .map(|(t, f)| Crossing {
                    t,
                    normal: m.face_normal(f),
                })
                .collect(),
        };
        out.sort_by(|a, b| a.t.total_cmp(&b.t));
        out
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Box { half_extents: h } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Cylinder { radius, half_height } => {
                4.0 * PI * radius * half_height + 2.0 * PI * radius * radius
            }
            Shape::Mesh(m) => m.area(),
        }
    }

    /// Uniform area-weighted surface point with its outward normal.
    pub fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec3, Vec3) {
        match self {
            Shape::Sphere { radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi = rng.random_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let n = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                (n * *radius, n)
            }
            Shape::Box { half_extents: h } => {
                let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = i;
                        break;
                    }
                    pick -= a;
                }
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut p = Vec3::zeros();
                for k in 0..3 {
                    p[k] = if k == axis {
                        sign * h[k]
                    } else {
                        rng.random_range(-h[k]..=h[k])
                    };
                }
                let mut n = Vec3::zeros();
                n[axis] = sign;
                (p, n)
            }
            Shape::Cylinder { radius, half_height } => {
                let side = 4.0 * PI * radius * half_height;
                let cap = PI * radius * radius;
                let pick = rng.random_range(0.0..side + 2.0 * cap);
                let phi = rng.random_range(0.0..2.0 * PI);
                if pick < side {
                    let z = rng.random_range(-*half_height..=*half_height);
                    let n = Vec3::new(phi.cos(), phi.sin(), 0.0);
                    (Vec3::new(radius * n.x, radius * n.y, z), n)
                } else {
                    let sign = if pick < side + cap { 1.0 } else { -1.0 };
                    let r = radius * rng.random::<f64>().sqrt();
                    (
                        Vec3::new(r * phi.cos(), r * phi.sin(), sign * half_height),
                        Vec3::new(0.0, 0.0, sign),
                    )
                }
            }
            Shape::Mesh(m) => {
                let total = m.area();
                let mut pick = rng.random_range(0.0..total);
                let mut face = m.faces.len() - 1;
                for f in 0..m.faces.len() {
                    let a = m.face_area(f);
                    if pick < a {
                        face = f;
                        break;
                    }
                    pick -= a;
                }
                let [a, b, c] = m.triangle(face);
                let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                (a + (b - a) * u + (c - a) * v, m.face_normal(face))
            }
        }
    }

    /// Deterministic surface points no farther than `spacing` apart along
    /// the surface parametrization; includes edges and corners.
    pub fn probe_points(&self, spacing: f64) -> Vec<Vec3> {
        match self {
            Shape::Box { half_extents } => box_surface_lattice(half_extents, spacing),
            Shape::Sphere { radius } => {
                let count = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(12.0) as usize;
                fibonacci_sphere(count).into_iter().map(|n| n * *radius).collect()
            }
            Shape::Cylinder { radius, half_height } => {
                let mut pts = Vec::new();
                let around = ((2.0 * PI * radius) / spacing).ceil().max(8.0) as usize;
                let rings = ((2.0 * half_height) / spacing).ceil().max(1.0) as usize;
                for k in 0..=rings {
                    let z = -half_height + 2.0 * half_height * k as f64 / rings as f64;
                    for i in 0..around {
                        let phi = 2.0 * PI * i as f64 / around as f64;
                        pts.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), z));
                    }
                }
                let radial = (radius / spacing).ceil().max(1.0) as usize;
                for z in [-*half_height, *half_height] {
                    pts.push(Vec3::new(0.0, 0.0, z));
                    for j in 1..radial {
                        let r = radius * j as f64 / radial as f64;
                        let count = ((2.0 * PI * r) / spacing).ceil().max(6.0) as usize;
                        for i in 0..count {
                            let phi = 2.0 * PI * i as f64 / count as f64;
                            pts.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
                        }
                    }
                }
                pts
            }
            Shape::Mesh(m) => {
                let mut pts = m.vertices.clone();
                for f in 0..m.faces.len() {
                    let [a, b, c] = m.triangle(f);
                    let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
                    let k = (longest / spacing).ceil().max(1.0) as usize;
                    for i in 0..=k {
                        for j in 0..=(k - i) {
                            let (u, v) = (i as f64 / k as f64, j as f64 / k as f64);
                            pts.push(a + (b - a) * u + (c - a) * v);
                        }
                    }
                }
                pts
            }
        }
    }
}

pub fn box_sdf(h: &Vec3, p: &Vec3) -> f64 {
    let q = p.abs() - h;
    let outside = q.map(|v| v.max(0.0)).norm();
    outside + q.max().min(0.0)
}

fn slab_crossings(h: &Vec3, o: &Vec3, d: &Vec3) -> Vec<Crossing> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let (mut n_near, mut n_far) = (Vec3::zeros(), Vec3::zeros());
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k].abs() > h[k] {
                return Vec::new();
            }
            continue;
        }
        let t1 = (-h[k] - o[k]) / d[k];
        let t2 = (h[k] - o[k]) / d[k];
        let (lo, hi, s) = if t1 < t2 { (t1, t2, -1.0) } else { (t2, t1, 1.0) };
        if lo > t_near {
            t_near = lo;
            n_near = Vec3::zeros();
            n_near[k] = s;
        }
        if hi < t_far {
            t_far = hi;
            n_far = Vec3::zeros();
            n_far[k] = -s;
        }
    }
    if t_near > t_far || !t_near.is_finite() {
        return Vec::new();
    }
    vec![
        Crossing { t: t_near, normal: n_near },
        Crossing { t: t_far, normal: n_far },
    ]
}

fn cylinder_crossings(r: f64, hh: f64, o: &Vec3, d: &Vec3) -> Vec<Crossing> {
    let mut out = Vec::new();
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = o.x * d.x + o.y * d.y;
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / a, (-b + s) / a] {
                let p = o + d * t;
                if p.z.abs() <= hh {
                    out.push(Crossing {
                        t,
                        normal: Vec3::new(p.x / r, p.y / r, 0.0),
                    });
                }
            }
        }
    }
    if d.z.abs() > 1e-15 {
        for sign in [-1.0, 1.0] {
            let t = (sign * hh - o.z) / d.z;
            let p = o + d * t;
            if p.x * p.x + p.y * p.y <= r * r {
                out.push(Crossing {
                    t,
                    normal: Vec3::new(0.0, 0.0, sign),
                });
            }
        }
    }
    out
}

fn box_surface_lattice(h: &Vec3, spacing: f64) -> Vec<Vec3> {
    let steps = h.map(|e| ((2.0 * e) / spacing).ceil().max(1.0) as usize);
    let coord = |k: usize, i: usize| -h[k] + 2.0 * h[k] * i as f64 / steps[k] as f64;
    let mut pts = Vec::new();
    for i in 0..=steps[0] {
        for j in 0..=steps[1] {
            for k in 0..=steps[2] {
                let on_face = i == 0 || i == steps[0] || j == 0 || j == steps[1] || k == 0 || k == steps[2];
                if on_face {
                    pts.push(Vec3::new(coord(0, i), coord(1, j), coord(2, k)));
                }
            }
        }
    }
    pts
}

fn fibonacci_sphere(count: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
