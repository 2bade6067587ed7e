//! Training losses with analytic gradients.
//!
//! Every loss returns its value together with the gradient with respect to
//! the raw network outputs it depends on. Batch reductions sum in index
//! order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{approach_set, GraspConfiguration, UnitVec3, Vec3};
use crate::power_spherical::{
    kappa_map, kappa_map_grad, log_normalizer, log_normalizer_grad, DEFAULT_KAPPA0, DEFAULT_KAPPA_EPS,
};
use crate::volumetric::VoxelClass;

/// Floor on `1 + μᵀx` inside the logarithm, keeping antipodal targets finite.
pub const LOG1P_FLOOR: f64 = 1e-12;
pub const NEIGHBOR_RADIUS: f64 = 0.003;
pub const MAX_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub phi_l: f64,
    pub phi_g: f64,
    pub eta_b: f64,
    pub eta_a: f64,
    pub eta_w: f64,
    pub eta_q: f64,
    /// Focal-loss weights for contact, approach and empty voxels.
    pub class_weights: [f64; 3],
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            phi_l: 1.0,
            phi_g: 1.0,
            eta_b: 1.0,
            eta_a: 0.01,
            eta_w: 0.1,
            eta_q: 10.0,
            class_weights: [10.0, 5.0, 0.1],
            focal_gamma: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.phi_l,
            self.phi_g,
            self.eta_b,
            self.eta_a,
            self.eta_w,
            self.eta_q,
            self.focal_gamma,
        ];
        if all.iter().chain(&self.class_weights).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", "loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Parameters of the map from the raw output `κ'` to the concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KappaMap {
    pub kappa0: f64,
    pub eps: f64,
}

impl Default for KappaMap {
    fn default() -> Self {
        Self {
            kappa0: DEFAULT_KAPPA0,
            eps: DEFAULT_KAPPA_EPS,
        }
    }
}

impl KappaMap {
    pub fn kappa(&self, kappa_prime: f64) -> f64 {
        kappa_map(kappa_prime, self.kappa0, self.eps)
    }

    pub fn grad(&self, kappa_prime: f64) -> f64 {
        kappa_map_grad(kappa_prime, self.kappa0, self.eps)
    }

    /// True when `κ'` is within `margin` of a clamp boundary, where the
    /// derivative jumps.
    pub fn near_clamp(&self, kappa_prime: f64, margin: f64) -> bool {
        let lo = 0.25 - self.eps;
        let hi = 1.0 - self.eps;
        (kappa_prime - lo).abs() < margin || (kappa_prime - hi).abs() < margin
    }
}

/// Mean focal loss over voxels, from logits. Returns the loss and its
/// gradient with respect to every logit.
pub fn focal_loss(
    logits: &[[f64; 3]],
    truth: &[VoxelClass],
    class_weights: &[f64; 3],
    gamma: f64,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if logits.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} labels",
            logits.len(),
            truth.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::invalid("logits", "no voxels"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (z, class) in logits.iter().zip(truth) {
        let k = class.index();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let logp: [f64; 3] = z.map(|v| v - lse);
        let p: [f64; 3] = logp.map(f64::exp);
        let one_minus: f64 = (0..3).filter(|j| *j != k).map(|j| p[j]).sum();
        let w = class_weights[k];
        loss += -w * one_minus.powf(gamma) * logp[k];
        // dL/dz_j = -w (δ_jk − p_j) [(1−p)^γ − γ (1−p)^(γ−1) p log p]
        let focus = if one_minus > 0.0 {
            one_minus.powf(gamma) - gamma * one_minus.powf(gamma - 1.0) * p[k] * logp[k]
        } else if gamma == 0.0 {
            1.0
        } else {
            0.0
        };
        let mut g = [0.0; 3];
        for (j, gj) in g.iter_mut().enumerate() {
            let delta = if j == k { 1.0 } else { 0.0 };
            *gj = -w * (delta - p[j]) * focus / n;
        }
        grad.push(g);
    }
    Ok((loss / n, grad))
}

/// Focal loss evaluated on probabilities (no gradient).
pub fn focal_loss_probs(probs: &[[f64; 3]], truth: &[VoxelClass], class_weights: &[f64; 3], gamma: f64) -> Result<f64> {
    for p in probs {
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("probs", format!("{p:?} is not a simplex point")));
        }
    }
    let logits: Vec<[f64; 3]> = probs.iter().map(|p| p.map(f64::ln)).collect();
    Ok(focal_loss(&logits, truth, class_weights, gamma)?.0)
}

/// Loss value with gradients for a direction output `ν` (before
/// normalization) and the concentration output `κ'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLoss {
    pub value: f64,
    pub grad_nu: Vec3,
    pub grad_kappa_prime: f64,
}

fn ps_nll_terms(mu: &Vec3, kappa: f64, x: &Vec3) -> (f64, f64, Vec3) {
    // value, d/dκ, d/dμ
    let arg = 1.0 + mu.dot(x);
    let (l, dmu) = if arg > LOG1P_FLOOR {
        (arg.ln(), -kappa * x / arg)
    } else {
        (LOG1P_FLOOR.ln(), Vec3::zeros())
    };
    (log_normalizer(kappa) - kappa * l, log_normalizer_grad(kappa) - l, dmu)
}

/// Mean negative log-likelihood of the neighbor baselines under
/// `PS(ν/|ν|, κ(κ'))`.
pub fn nll_baseline(nu_raw: &Vec3, kappa_prime: f64, baselines: &[UnitVec3], km: &KappaMap) -> Result<DirectionalLoss> {
    if baselines.is_empty() {
        return Err(Error::invalid("baselines", "contact has no true neighbors"));
    }
    let len = nu_raw.norm();
    if !(len > 0.0) {
        return Err(Error::invalid("nu", "direction output is zero"));
    }
    let nu = nu_raw / len;
    let kappa = km.kappa(kappa_prime);
    let n = baselines.len() as f64;
    let (mut value, mut dk, mut dnu) = (0.0, 0.0, Vec3::zeros());
    for b in baselines {
        let (v, g_k, g_mu) = ps_nll_terms(&nu, kappa, b);
        value += v;
        dk += g_k;
        dnu += g_mu;
    }
    let (value, dk, dnu) = (value / n, dk / n, dnu / n);
    let grad_nu = (dnu - nu * nu.dot(&dnu)) / len;
    Ok(DirectionalLoss {
        value,
        grad_nu,
        grad_kappa_prime: dk * km.grad(kappa_prime),
    })
}

/// Approach-set geometry shared by predictions and labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanSpec {
    pub n_r: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for FanSpec {
    fn default() -> Self {
        let (lo, hi) = crate::geom::DEFAULT_ANGLE_RANGE;
        Self {
            n_r: crate::geom::DEFAULT_APPROACH_COUNT,
            lo,
            hi,
        }
    }
}

/// Mean negative log-likelihood of the true collision-free approaches,
/// each under its own component `PS(R_i ν̂, κ)` built on the estimated
/// baseline `ν̂`. The direction output only enters through `ν̂`, which is
/// held constant, so its gradient is zero.
pub fn nll_approach(
    kappa_prime: f64,
    nu_hat: &UnitVec3,
    truth: &GraspConfiguration,
    fan: &FanSpec,
    km: &KappaMap,
) -> Result<DirectionalLoss> {
    if truth.approaches.len() != fan.n_r || truth.collision_scores.len() != fan.n_r {
        return Err(Error::ShapeMismatch(format!(
            "label has {} approaches, the fan {}",
            truth.approaches.len(),
            fan.n_r
        )));
    }
    let means = approach_set(nu_hat, fan.n_r, fan.lo, fan.hi)?;
    let kappa = km.kappa(kappa_prime);
    let (mut value, mut dk, mut count) = (0.0, 0.0, 0usize);
    for ((a, sigma), (_, mu)) in truth.approaches.iter().zip(&truth.collision_scores).zip(&means) {
        if *sigma <= 0.5 {
            continue;
        }
        let (v, g_k, _) = ps_nll_terms(mu, kappa, a);
        value += v;
        dk += g_k;
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("truth", "label has no collision-free approach"));
    }
    let n = count as f64;
    Ok(DirectionalLoss {
        value: value / n,
        grad_nu: Vec3::zeros(),
        grad_kappa_prime: dk / n * km.grad(kappa_prime),
    })
}

/// Indices of up to `MAX_NEIGHBORS` true contacts within `NEIGHBOR_RADIUS`
/// of `c`, nearest first (ties by index).
pub fn neighbor_set(c: &Vec3, true_contacts: &[Vec3]) -> Vec<usize> {
    let mut within: Vec<(f64, usize)> = true_contacts
        .iter()
        .enumerate()
        .map(|(i, t)| ((t - c).norm(), i))
        .filter(|(d, _)| *d <= NEIGHBOR_RADIUS)
        .collect();
    within.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    within.truncate(MAX_NEIGHBORS);
    within.into_iter().map(|(_, i)| i).collect()
}

/// Sign-aligned mean of neighbor baselines. The flag is set when the mean
/// vanished and the first baseline was returned instead.
pub fn neighbor_mean_baseline(baselines: &[UnitVec3]) -> Result<(UnitVec3, bool)> {
    let first = baselines
        .first()
        .ok_or_else(|| Error::invalid("baselines", "no neighbors to average"))?;
    let sum: Vec3 = baselines
        .iter()
        .map(|b| if b.dot(first) < 0.0 { -b.into_inner() } else { b.into_inner() })
        .sum();
    let mean = sum / baselines.len() as f64;
    if mean.norm() < 1e-9 {
        return Ok((*first, true));
    }
    Ok((UnitVec3::new_normalize(mean), false))
}

/// Distance between the predicted contact pair `(c, c + w·b)` and the
/// closest true pair, averaged over the two endpoints, with the better
/// orientation of each true pair. Returns the loss and `d/dw`.
pub fn width_loss(c: &Vec3, b: &UnitVec3, w: f64, true_pairs: &[(Vec3, Vec3)]) -> Result<(f64, f64)> {
    if true_pairs.is_empty() {
        return Err(Error::invalid("true_pairs", "no true contact pairs"));
    }
    let p1 = *c;
    let p2 = c + b.into_inner() * w;
    let mut best: Option<(f64, Vec3, Vec3)> = None;
    for (t1, t2) in true_pairs {
        for (s1, s2) in [(t1, t2), (t2, t1)] {
            let d = ((p1 - s1).norm() + (p2 - s2).norm()) / 2.0;
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, *s1, *s2));
            }
        }
    }
    let (d, _, s2) = best.expect("non-empty pairs");
    let r = p2 - s2;
    let len = r.norm();
    let grad = if len > 0.0 { r.dot(b) / len / 2.0 } else { 0.0 };
    Ok((d, grad))
}

/// `|q_pred − q_true|` with subgradient `0` at equality.
pub fn quality_l1(q_pred: f64, q_true: f64) -> (f64, f64) {
    let d = q_pred - q_true;
    let g = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    };
    (d.abs(), g)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub label: f64,
    pub baseline: f64,
    pub approach: f64,
    pub width: f64,
    pub quality: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    let all = [parts.label, parts.baseline, parts.approach, parts.width, parts.quality];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("parts", "loss components must be finite"));
    }
    w.validate()?;
    let grasp = w.eta_b * parts.baseline + w.eta_a * parts.approach + w.eta_w * parts.width + w.eta_q * parts.quality;
    Ok(w.phi_l * parts.label + w.phi_g * grasp)
}

/// Largest relative deviation between the analytic gradient of `f` at `x`
/// and central differences with step `h·max(1, |x_i|)`. The relative error
/// uses an absolute floor of 1e-8 in the denominator.
pub fn grad_check<F>(f: F, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x);
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let up = f(&probe).0;
        probe[i] = x[i] - step;
        let down = f(&probe).0;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * step);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}
