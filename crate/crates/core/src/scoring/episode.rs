use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::predictor::{Observation, Predictor};
use super::render::{render_depth, Camera, DepthNoise};
use super::select::{compose_all, select_next_grasp, SelectionParams};
use crate::error::{Error, Result};
use crate::geom::{grasp_pose, ContactGrasp, GraspPose, GripperModel};
use crate::oracle::{antipodal_quality, collision_check, CollisionParams, Scene};
use crate::seed::derive_seed;
use crate::volumetric::{default_trunc, fuse_depth, tsdf_normals, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecParams {
    pub gripper: GripperModel,
    pub collision: CollisionParams,
    /// Retreat of the pre-grasp pose along `-a`, meters.
    pub pregrasp_distance: f64,
    /// Minimum quality of the realized contact pair.
    pub success_quality: f64,
    /// Distance within which the object nearest to `c` counts as the target.
    pub target_tolerance: f64,
}

impl Default for ExecParams {
    fn default() -> Self {
        Self {
            gripper: GripperModel::default(),
            collision: CollisionParams::default(),
            pregrasp_distance: 0.1,
            success_quality: 0.5,
            target_tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Success { object_id: u32 },
    Collision,
    Unstable,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

fn target_of(scene: &Scene, grasp: &ContactGrasp, params: &ExecParams) -> Option<u32> {
    scene
        .nearest_object(&grasp.c)
        .filter(|(_, d)| *d <= params.target_tolerance)
        .map(|(id, _)| id)
}

fn pose_for(grasp: &ContactGrasp, params: &ExecParams) -> Result<GraspPose> {
    grasp_pose(grasp, &params.gripper)
}

/// Whether the hand already collides at the pre-grasp pose.
pub fn pregrasp_collides(scene: &Scene, grasp: &ContactGrasp, params: &ExecParams) -> Result<bool> {
    let pose = pose_for(grasp, params)?.retreated(params.pregrasp_distance);
    Ok(collision_check(
        scene,
        &pose,
        &params.gripper,
        target_of(scene, grasp, params),
        &params.collision,
    ))
}

/// Executes a grasp against the ground truth. The fingers close along the
/// baseline through the fingertip midpoint; the grasp holds when both
/// jaws meet the same object in an antipodal enough pair. A held object is
/// removed from the scene.
pub fn execute_virtual(scene: &mut Scene, grasp: &ContactGrasp, params: &ExecParams) -> Result<Outcome> {
    let pose = pose_for(grasp, params)?;
    let target = target_of(scene, grasp, params);
    let gm = &params.gripper;
    let pre = pose.retreated(params.pregrasp_distance);
    if collision_check(scene, &pre, gm, target, &params.collision)
        || collision_check(scene, &pose, gm, target, &params.collision)
    {
        return Ok(Outcome::Collision);
    }
    let b = pose.baseline();
    let reach = pose.width / 2.0 + params.collision.finger_clearance;
    let m = pose.origin;
    let from_plus = scene.raycast(&(m + b * reach), &-b, 0.0);
    let from_minus = scene.raycast(&(m - b * reach), &b, 0.0);
    let (Some(h_plus), Some(h_minus)) = (from_plus, from_minus) else {
        return Ok(Outcome::Unstable);
    };
    let (Some(id), Some(other)) = (h_plus.object, h_minus.object) else {
        return Ok(Outcome::Unstable);
    };
    if id != other || h_plus.t + h_minus.t > 2.0 * reach {
        return Ok(Outcome::Unstable);
    }
    let q = match antipodal_quality(&h_minus.point, &h_plus.point, &h_minus.normal, &h_plus.normal) {
        Ok(q) => q,
        Err(_) => return Ok(Outcome::Unstable),
    };
    if q < params.success_quality {
        return Ok(Outcome::Unstable);
    }
    scene.remove(id);
    Ok(Outcome::Success { object_id: id })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Cleared,
    NoGrasp,
    ThreeFailures,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Cleared => "cleared",
            Termination::NoGrasp => "no_grasp",
            Termination::ThreeFailures => "three_failures",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene_id: String,
    pub attempts: usize,
    pub successes: usize,
    pub objects_initial: usize,
    pub objects_removed: usize,
    pub termination: Termination,
}

/// One executed grasp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub step: usize,
    pub config: usize,
    pub approach: usize,
    pub q: f64,
    pub sigma: f64,
    /// Candidates skipped before this one because the pre-grasp pose collided.
    pub skipped: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub result: EpisodeResult,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub exec: ExecParams,
    pub selection: SelectionParams,
    pub max_consecutive_failures: usize,
    pub camera_height: f64,
    pub grid: GridSpec,
    /// Depth noise; `None` renders clean depth.
    pub noise: Option<DepthNoise>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            exec: ExecParams::default(),
            selection: SelectionParams::default(),
            max_consecutive_failures: 3,
            camera_height: 1.0,
            grid: GridSpec::default(),
            noise: None,
        }
    }
}

type GraspKey = [u64; 6];

fn key(g: &ContactGrasp) -> GraspKey {
    [g.c.x, g.c.y, g.c.z, g.a.x, g.a.y, g.a.z].map(f64::to_bits)
}

/// Runs one clearing episode: observe, predict, compose, select, execute,
/// until the bin is empty, nothing is selectable, or too many consecutive
/// attempts fail. Grasps already tried in the episode are not repeated.
pub fn run_episode(
    mut scene: Scene,
    predictor: &mut dyn Predictor,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeTrace> {
    let initial = scene.objects.len();
    let camera = Camera::top_down(cfg.camera_height);
    let trunc = default_trunc(&cfg.grid);
    let mut tried: HashSet<GraspKey> = HashSet::new();
    let mut attempts = Vec::new();
    let mut successes = 0;
    let mut consecutive = 0;
    let mut step = 0;
    let termination = loop {
        if scene.objects.is_empty() {
            break Termination::Cleared;
        }
        if consecutive >= cfg.max_consecutive_failures {
            break Termination::ThreeFailures;
        }
        let mut depth = render_depth(&scene, &camera);
        if let Some(noise) = &cfg.noise {
            noise.apply(&mut depth, derive_seed(seed, step as u64));
        }
        let tsdf = fuse_depth(&depth, &camera.intrinsics, &camera.pose, &cfg.grid, trunc)?;
        let normals = tsdf_normals(&tsdf)?;
        let prediction = predictor.predict(&Observation {
            normals: &normals,
            step,
            scene: &scene,
        })?;
        prediction.validate(&normals)?;
        let configs = compose_all(&prediction.configs, prediction.label_grid.as_ref(), &cfg.exec.gripper);
        let mut tried_here: HashSet<(usize, usize)> = HashSet::new();
        for (ci, c) in configs.iter().enumerate() {
            for ai in 0..c.approaches.len() {
                if tried.contains(&key(&c.grasp(ai))) {
                    tried_here.insert((ci, ai));
                }
            }
        }
        let mut skipped = 0;
        let chosen = loop {
            let Some((ci, ai)) = select_next_grasp(&configs, &tried_here, &cfg.selection) else {
                break None;
            };
            let grasp = configs[ci].grasp(ai);
            tried_here.insert((ci, ai));
            tried.insert(key(&grasp));
            if pregrasp_collides(&scene, &grasp, &cfg.exec)? {
                skipped += 1;
                continue;
            }
            break Some((ci, ai, grasp));
        };
        let Some((ci, ai, grasp)) = chosen else {
            break Termination::NoGrasp;
        };
        let outcome = execute_virtual(&mut scene, &grasp, &cfg.exec)?;
        if outcome.is_success() {
            successes += 1;
            consecutive = 0;
        } else {
            consecutive += 1;
        }
        attempts.push(Attempt {
            step,
            config: ci,
            approach: ai,
            q: configs[ci].q,
            sigma: configs[ci].collision_scores[ai],
            skipped,
            outcome,
        });
        step += 1;
    };
    let result = EpisodeResult {
        scene_id: scene.id.clone(),
        attempts: attempts.len(),
        successes,
        objects_initial: initial,
        objects_removed: initial - scene.objects.len(),
        termination,
    };
    debug_assert!(result.attempts <= initial + 3 * (initial + 1));
    Ok(EpisodeTrace { result, attempts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Successes over attempts; `None` without attempts.
    pub sr: Option<f64>,
    /// Removed over initial objects; `None` when no scene had objects.
    pub cr: Option<f64>,
    pub episodes: usize,
    pub attempts: usize,
    pub successes: usize,
    pub objects_initial: usize,
    pub objects_removed: usize,
    pub terminations: BTreeMap<String, usize>,
}

pub fn aggregate_metrics(results: &[EpisodeResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::invalid("results", "no episodes to aggregate"));
    }
    let attempts: usize = results.iter().map(|r| r.attempts).sum();
    let successes: usize = results.iter().map(|r| r.successes).sum();
    let with_objects = results.iter().filter(|r| r.objects_initial > 0);
    let objects_initial: usize = with_objects.clone().map(|r| r.objects_initial).sum();
    let objects_removed: usize = with_objects.map(|r| r.objects_removed).sum();
    let mut terminations = BTreeMap::new();
    for r in results {
        *terminations.entry(r.termination.name().to_string()).or_insert(0) += 1;
    }
    Ok(Metrics {
        sr: (attempts > 0).then(|| successes as f64 / attempts as f64),
        cr: (objects_initial > 0).then(|| objects_removed as f64 / objects_initial as f64),
        episodes: results.len(),
        attempts,
        successes,
        objects_initial,
        objects_removed,
        terminations,
    })
}
