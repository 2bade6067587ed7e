use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geom::{grasp_pose, GraspConfiguration, GripperModel, Vec3};
use crate::volumetric::{trilinear, GridSpec, LabelGrid, VoxelClass};

/// Scales a prior quality by the interpolated contact confidence.
pub fn compose_quality(spec: &GridSpec, contact: &[f64], c: &Vec3, q_prior: f64) -> f64 {
    trilinear(spec, contact, c) * q_prior
}

/// Scales a prior collision score by the interpolated gripper-space
/// confidence at the approach point.
pub fn compose_collision(spec: &GridSpec, approach: &[f64], t: &Vec3, sigma_prior: f64) -> f64 {
    trilinear(spec, approach, t) * sigma_prior
}

/// Composes every configuration's `q` and `σ_i` against a label grid.
/// Without a grid the priors pass through unchanged.
pub fn compose_all(
    priors: &[GraspConfiguration],
    grid: Option<&LabelGrid>,
    gm: &GripperModel,
) -> Vec<GraspConfiguration> {
    let Some(grid) = grid else {
        return priors.to_vec();
    };
    let contact = grid.channel(VoxelClass::Contact);
    let approach = grid.channel(VoxelClass::Approach);
    priors
        .iter()
        .map(|p| {
            let mut out = p.clone();
            out.q = compose_quality(&grid.spec, &contact, &p.c, p.q);
            for (i, sigma) in out.collision_scores.iter_mut().enumerate() {
                *sigma = match grasp_pose(&p.grasp(i), gm) {
                    Ok(pose) => compose_collision(&grid.spec, &approach, &pose.approach_point, *sigma),
                    Err(_) => 0.0,
                };
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub q_threshold: f64,
    pub sigma_threshold: f64,
    pub max_approaches: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            q_threshold: 0.5,
            sigma_threshold: 0.5,
            max_approaches: 8,
        }
    }
}

fn lexicographic(a: &GraspConfiguration, b: &GraspConfiguration) -> Ordering {
    (0..3)
        .map(|k| a.c[k].total_cmp(&b.c[k]))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Configurations in the order the policy visits them.
pub fn config_order(configs: &[GraspConfiguration]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..configs.len()).collect();
    order.sort_by(|&i, &j| {
        configs[j]
            .q
            .total_cmp(&configs[i].q)
            .then_with(|| lexicographic(&configs[i], &configs[j]))
            .then(i.cmp(&j))
    });
    order
}

/// The approaches of one configuration the policy may try, best first.
pub fn approach_order(config: &GraspConfiguration, max_approaches: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..config.collision_scores.len()).collect();
    order.sort_by(|&i, &j| {
        config.collision_scores[j]
            .total_cmp(&config.collision_scores[i])
            .then(i.cmp(&j))
    });
    order.truncate(max_approaches);
    order
}

/// Next `(config, approach)` to execute: configurations by decreasing
/// quality, within each the top approaches by collision score, skipping
/// tried pairs and anything at or below the thresholds.
pub fn select_next_grasp(
    configs: &[GraspConfiguration],
    tried: &HashSet<(usize, usize)>,
    params: &SelectionParams,
) -> Option<(usize, usize)> {
    for ci in config_order(configs) {
        let config = &configs[ci];
        if !(config.q > params.q_threshold) {
            // later configurations have lower quality still
            break;
        }
        for ai in approach_order(config, params.max_approaches) {
            if tried.contains(&(ci, ai)) {
                continue;
            }
            if config.collision_scores[ai] > params.sigma_threshold {
                return Some((ci, ai));
            }
        }
    }
    None
}
