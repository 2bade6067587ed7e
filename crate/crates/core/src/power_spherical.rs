//! Power-Spherical distribution on the unit 2-sphere.
//!
//! Density `p(x) = (1 + μᵀx)^κ / N(κ)` with
//! `log N(κ) = (κ + 2) ln 2 + ln π − ln(κ + 1)`, the `d = 3` specialization
//! of the general normalizer (`β = 1`, `α = κ + 1`, where the gamma ratio
//! collapses to `1 / (κ + 1)`).

use std::f64::consts::{LN_2, PI};

use nalgebra::{Matrix3, Unit};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{checked_rotation, checked_unit, Rotation, UnitVec3, Vec3};

pub const DEFAULT_KAPPA0: f64 = 25.0;
pub const DEFAULT_KAPPA_EPS: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSpherical {
    pub mu: UnitVec3,
    pub kappa: f64,
}

impl PowerSpherical {
    pub fn new(mu: UnitVec3, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::invalid("kappa", format!("must be positive and finite, got {kappa}")));
        }
        checked_unit(mu.into_inner(), 1e-9)?;
        Ok(Self { mu, kappa })
    }

    pub fn log_pdf(&self, x: &Vec3) -> Result<f64> {
        ps_log_pdf(x, self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitVec3 {
        ps_sample(self, rng)
    }

    /// `E[μᵀx] = (α − β) / (α + β) = κ / (κ + 2)`.
    pub fn mean_cosine(&self) -> f64 {
        self.kappa / (self.kappa + 2.0)
    }
}

/// `ln N(κ)`.
pub fn log_normalizer(kappa: f64) -> f64 {
    (kappa + 2.0) * LN_2 + PI.ln() - kappa.ln_1p()
}

/// `d ln N / dκ`.
pub fn log_normalizer_grad(kappa: f64) -> f64 {
    LN_2 - 1.0 / (kappa + 1.0)
}

/// Log density; `-inf` at the antipode of `μ`.
pub fn ps_log_pdf(x: &Vec3, d: &PowerSpherical) -> Result<f64> {
    checked_unit(*x, UNIT_TOL)?;
    let cos = d.mu.dot(x).clamp(-1.0, 1.0);
    Ok(log_kernel(cos, d.kappa) - log_normalizer(d.kappa))
}

fn log_kernel(cos: f64, kappa: f64) -> f64 {
    let l = cos.ln_1p();
    if l == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        kappa * l
    }
}

/// Draws one direction: `s = 2Z − 1` with `Z ~ Beta(κ + 1, 1)`, a uniform
/// tangent direction, then the Householder reflection `e₁ → μ`.
pub fn ps_sample<R: Rng + ?Sized>(d: &PowerSpherical, rng: &mut R) -> UnitVec3 {
    let alpha = d.kappa + 1.0;
    let ga = Gamma::new(alpha, 1.0).expect("alpha > 1");
    let gb = Gamma::new(1.0, 1.0).expect("unit shape");
    let (x, y): (f64, f64) = loop {
        let x = ga.sample(rng);
        let y = gb.sample(rng);
        if x + y > 0.0 {
            break (x, y);
        }
    };
    let total = x + y;
    // 1 + s = 2Z and 1 - s = 2(1 - Z), each formed without cancellation
    let one_plus = 2.0 * x / total;
    let one_minus = 2.0 * y / total;
    let s = one_plus - 1.0;
    let radial = (one_plus * one_minus).max(0.0).sqrt();
    let phi = rng.random_range(0.0..2.0 * PI);
    let local = Vec3::new(s, radial * phi.cos(), radial * phi.sin());
    Unit::new_normalize(householder_from_e1(&d.mu, &local))
}

fn householder_from_e1(mu: &UnitVec3, v: &Vec3) -> Vec3 {
    let u = Vec3::x() - mu.into_inner();
    let uu = u.norm_squared();
    if uu < 1e-24 {
        return *v;
    }
    v - u * (2.0 * u.dot(v) / uu)
}

/// `PS(Rμ, κ)`; fails if `R` is not a proper rotation within 1e-6.
pub fn ps_rotate(d: &PowerSpherical, r: &Matrix3<f64>) -> Result<PowerSpherical> {
    let rot = checked_rotation(*r, 1e-6)?;
    Ok(PowerSpherical {
        mu: Unit::new_normalize(rot * d.mu.into_inner()),
        kappa: d.kappa,
    })
}

/// `κ = min(max(κ0 / (κ′ + ε), κ0), 4κ0)`.
pub fn kappa_map(kappa_prime: f64, kappa0: f64, eps: f64) -> f64 {
    (kappa0 / (kappa_prime + eps)).max(kappa0).min(4.0 * kappa0)
}

/// `dκ/dκ′`, zero where either clamp is active.
pub fn kappa_map_grad(kappa_prime: f64, kappa0: f64, eps: f64) -> f64 {
    let raw = kappa0 / (kappa_prime + eps);
    if raw > kappa0 && raw < 4.0 * kappa0 {
        -kappa0 / ((kappa_prime + eps) * (kappa_prime + eps))
    } else {
        0.0
    }
}

/// Collision-weighted mixture of rotated copies of a base distribution.
#[derive(Debug, Clone)]
pub struct ApproachMixture {
    pub base: PowerSpherical,
    pub rotations: Vec<Rotation>,
    pub weights: Vec<f64>,
}

impl ApproachMixture {
    pub fn new(base: PowerSpherical, rotations: Vec<Rotation>, weights: Vec<f64>) -> Result<Self> {
        if rotations.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rotations but {} weights",
                rotations.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid("weights", "collision scores must lie in [0, 1]"));
        }
        Ok(Self {
            base,
            rotations,
            weights,
        })
    }

    pub fn component(&self, i: usize) -> PowerSpherical {
        PowerSpherical {
            mu: Unit::new_normalize(self.rotations[i] * self.base.mu.into_inner()),
            kappa: self.base.kappa,
        }
    }
}

pub fn approach_mixture_log_pdf(a: &Vec3, m: &ApproachMixture) -> Result<f64> {
    checked_unit(*a, UNIT_TOL)?;
    let total: f64 = m.weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid(
            "weights",
            "all collision scores are zero; the contact has no collision-free approach",
        ));
    }
    let terms: Vec<f64> = m
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| {
            let comp = m.component(i);
            w.ln() + log_kernel(comp.mu.dot(a).clamp(-1.0, 1.0), comp.kappa)
        })
        .collect();
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    Ok(peak + sum.ln() - total.ln() - log_normalizer(m.base.kappa))
}
