use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Cubic voxel lattice. Voxel `(i, j, k)` spans
/// `origin + [i, i+1) × [j, j+1) × [k, k+1) · voxel_size`; values live at
/// voxel centers. Linear storage is x-major: `(i·n + j)·n + k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub voxel_size: f64,
    pub origin: Vec3,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::centered(64, 0.009, -0.018)
    }
}

impl GridSpec {
    pub fn new(n: usize, voxel_size: f64, origin: Vec3) -> Result<Self> {
        let spec = Self {
            n,
            voxel_size,
            origin,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Grid centered on the world z axis with its bottom face at `z_min`.
    pub fn centered(n: usize, voxel_size: f64, z_min: f64) -> Self {
        let half = n as f64 * voxel_size / 2.0;
        Self {
            n,
            voxel_size,
            origin: Vec3::new(-half, -half, z_min),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::invalid("n", format!("grid needs at least 8 voxels per axis, got {}", self.n)));
        }
        if !(self.voxel_size > 0.0) || !self.voxel_size.is_finite() {
            return Err(Error::invalid("voxel_size", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.voxel_size
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    pub fn center_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let rel = (p - self.origin) / self.voxel_size;
        let mut out = [0usize; 3];
        for (o, r) in out.iter_mut().zip(rel.iter()) {
            if !(*r >= 0.0) || *r >= self.n as f64 {
                return None;
            }
            *o = r.floor() as usize;
        }
        Some(out)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.voxel_of(p).is_some()
    }
}

/// Trilinear blend of the eight voxel centers around `p`. Points outside
/// the center lattice are clamped onto its boundary.
pub fn trilinear(spec: &GridSpec, values: &[f64], p: &Vec3) -> f64 {
    debug_assert_eq!(values.len(), spec.len());
    let n = spec.n;
    let top = (n - 1) as f64;
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for axis in 0..3 {
        let u = ((p[axis] - spec.origin[axis]) / spec.voxel_size - 0.5).clamp(0.0, top);
        let i0 = (u.floor() as usize).min(n - 2);
        base[axis] = i0;
        frac[axis] = u - i0 as f64;
    }
    let [i, j, k] = base;
    let [fx, fy, fz] = frac;
    let v = |a: usize, b: usize, c: usize| values[spec.index(i + a, j + b, k + c)];
    let c00 = v(0, 0, 0) * (1.0 - fx) + v(1, 0, 0) * fx;
    let c01 = v(0, 0, 1) * (1.0 - fx) + v(1, 0, 1) * fx;
    let c10 = v(0, 1, 0) * (1.0 - fx) + v(1, 1, 0) * fx;
    let c11 = v(0, 1, 1) * (1.0 - fx) + v(1, 1, 1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec::new(9, 0.1, Vec3::new(-0.3, 0.2, 1.0)).unwrap()
    }

    /// Weighted sum over the eight corners, weights from the product formula.
    fn corner_sum_oracle(spec: &GridSpec, values: &[f64], p: &Vec3) -> f64 {
        let u: Vec<f64> = (0..3)
            .map(|a| ((p[a] - spec.origin[a]) / spec.voxel_size - 0.5).clamp(0.0, (spec.n - 1) as f64))
            .collect();
        let base: Vec<usize> = u.iter().map(|x| (x.floor() as usize).min(spec.n - 2)).collect();
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                let t = u[a] - base[a] as f64;
                w *= if bit == 1 { t } else { 1.0 - t };
                idx[a] = base[a] + bit;
            }
            acc += w * values[spec.index(idx[0], idx[1], idx[2])];
        }
        acc
    }

    #[test]
    fn rejects_small_grid() {
        assert!(GridSpec::new(4, 0.1, Vec3::zeros()).is_err());
        assert!(GridSpec::new(8, 0.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn index_round_trip() {
        let s = spec();
        for idx in [0, 1, 80, 500, s.len() - 1] {
            let [i, j, k] = s.coords(idx);
            assert_eq!(s.index(i, j, k), idx);
            assert_eq!(s.voxel_of(&s.center_of(idx)), Some([i, j, k]));
        }
        assert_eq!(s.voxel_of(&(s.origin - Vec3::repeat(1e-9))), None);
    }

    #[test]
    fn voxel_center_reproduces_value() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..s.len()).map(|_| rng.random()).collect();
        for idx in [0, 7, 100, 333, s.len() - 1] {
            assert!((trilinear(&s, &values, &s.center_of(idx)) - values[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_is_mean() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..s.len()).map(|_| rng.random()).collect();
        let a = s.center(2, 3, 4);
        let b = s.center(2, 4, 4);
        let mid = (a + b) / 2.0;
        let expect = (values[s.index(2, 3, 4)] + values[s.index(2, 4, 4)]) / 2.0;
        assert!((trilinear(&s, &values, &mid) - expect).abs() < 1e-12);
    }

    #[test]
    fn matches_corner_oracle() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..s.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
        for _ in 0..2000 {
            let p = s.origin + Vec3::new(rng.random(), rng.random(), rng.random()) * (s.extent() * 1.2)
                - Vec3::repeat(0.1 * s.extent());
            let got = trilinear(&s, &values, &p);
            assert!((got - corner_sum_oracle(&s, &values, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_on_affine_fields() {
        let s = spec();
        let slope = Vec3::new(0.7, -1.3, 2.1);
        let f = |p: &Vec3| slope.dot(p) + 0.25;
        let values: Vec<f64> = (0..s.len()).map(|i| f(&s.center_of(i))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let lo = s.center(0, 0, 0);
            let hi = s.center(s.n - 1, s.n - 1, s.n - 1);
            let p = lo + (hi - lo).component_mul(&Vec3::new(rng.random(), rng.random(), rng.random()));
            assert!((trilinear(&s, &values, &p) - f(&p)).abs() < 1e-12);
        }
    }
}
