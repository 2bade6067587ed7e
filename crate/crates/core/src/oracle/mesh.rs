use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Closed triangle mesh with outward (counter-clockwise) winding.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Builds a mesh, flipping the winding if it encloses negative volume.
    pub fn new(vertices: Vec<Vec3>, mut faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::invalid("mesh", "no faces"));
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::invalid("mesh", format!("face {f:?} references a missing vertex")));
        }
        let volume: f64 = faces
            .iter()
            .map(|f| vertices[f[0]].dot(&vertices[f[1]].cross(&vertices[f[2]])) / 6.0)
            .sum();
        if volume.abs() < 1e-15 {
            return Err(Error::invalid("mesh", "mesh encloses no volume"));
        }
        if volume < 0.0 {
            for f in &mut faces {
                f.swap(1, 2);
            }
        }
        Ok(Self { vertices, faces })
    }

    /// Parses the `v` / `f` subset of Wavefront OBJ (triangles only; `f`
    /// entries may carry `/vt/vn` suffixes, which are ignored).
    pub fn parse_obj(text: &str, origin: &Path) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let bad = |what: &str| Error::format(origin, format!("line {}: {what}", lineno + 1));
            match parts.next() {
                Some("v") => {
                    let xyz: Vec<f64> = parts
                        .take(3)
                        .map(|s| s.parse::<f64>().map_err(|_| bad("bad vertex coordinate")))
                        .collect::<Result<_>>()?;
                    if xyz.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|s| {
                            let head = s.split('/').next().unwrap_or("");
                            let i: i64 = head.parse().map_err(|_| bad("bad face index"))?;
                            let n = vertices.len() as i64;
                            let resolved = if i < 0 { n + i } else { i - 1 };
                            if resolved < 0 {
                                return Err(bad("face index out of range"));
                            }
                            Ok(resolved as usize)
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() != 3 {
                        return Err(bad("only triangular faces are supported"));
                    }
                    faces.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, faces).map_err(|e| Error::format(origin, e.to_string()))
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_obj(&text, path)
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        out
    }

    /// Right prism over a regular polygon, axis along local z.
    pub fn prism(sides: usize, radius: f64, half_height: f64) -> Self {
        assert!(sides >= 3);
        let mut vertices = Vec::with_capacity(2 * sides + 2);
        for z in [-half_height, half_height] {
            for i in 0..sides {
                let t = 2.0 * PI * i as f64 / sides as f64;
                vertices.push(Vec3::new(radius * t.cos(), radius * t.sin(), z));
            }
        }
        let bottom = vertices.len();
        vertices.push(Vec3::new(0.0, 0.0, -half_height));
        let top = vertices.len();
        vertices.push(Vec3::new(0.0, 0.0, half_height));
        let mut faces = Vec::with_capacity(4 * sides);
        for i in 0..sides {
            let j = (i + 1) % sides;
            faces.push([i, j, sides + j]);
            faces.push([i, sides + j, sides + i]);
            faces.push([bottom, j, i]);
            faces.push([top, sides + i, sides + j]);
        }
        Self::new(vertices, faces).expect("prism is a closed solid")
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Generalized winding number; ≈1 inside a closed mesh, ≈0 outside.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f).map(|v| v - p);
            let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
            let num = a.dot(&b.cross(&c));
            let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
            total += 2.0 * num.atan2(den);
        }
        total / (4.0 * PI)
    }

    pub fn unsigned_distance(&self, p: &Vec3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.unsigned_distance(p);
        if self.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }

    /// Every crossing of the line `o + t·d` with the surface, as `(t, face)`.
    pub fn ray_crossings(&self, o: &Vec3, d: &Vec3) -> Vec<(f64, usize)> {
        let mut hits = Vec::new();
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            if let Some(t) = ray_triangle(o, d, &a, &b, &c) {
                hits.push((t, f));
            }
        }
        hits.sort_by(|x, y| x.0.total_cmp(&y.0));
        hits
    }
}

/// Möller–Trumbore; returns the line parameter of the hit (any sign).
fn ray_triangle(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-18 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = o - a;
    let u = tv.dot(&pv) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    Some(e2.dot(&qv) * inv)
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}
