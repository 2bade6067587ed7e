//! Command implementations behind the `psgrasp` binary.
//!
//! Each command is a function of its inputs, the [`RunConfig`] and the
//! master seed; output bytes do not depend on the rayon thread count.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use gauss_quad::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{approach_set, unit, GraspConfiguration, GripperModel, UnitVec3, Vec3};
use crate::losses::{
    focal_loss, grad_check, nll_approach, nll_baseline, quality_l1, width_loss, FanSpec, KappaMap, LossWeights,
};
use crate::oracle::{
    antipodal_quality, generate_labels, make_scene, preset_count, read_scene, write_labels, write_scene, Bin,
    CollisionParams, GraspLabel, LabelParams, LabelStats, PlacementParams, Preset, Scene,
};
use crate::power_spherical::{ps_log_pdf, ps_sample, PowerSpherical};
use crate::scoring::{
    aggregate_metrics, run_episode, DepthNoise, EpisodeConfig, EpisodeTrace, ExecParams, FilePredictor, Metrics,
    OraclePredictor, Predictor, SelectionParams,
};
use crate::seed::{derive_named, derive_seed};
use crate::volumetric::io::{read_depth, read_json, write_json, write_normals, write_tsdf, CameraFile};
use crate::volumetric::{default_trunc, fuse_depth, tsdf_normals, GridSpec, VoxelClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub preset: Preset,
    /// Depth-noise toggle; `None` follows the preset.
    pub noise: Option<bool>,
    pub depth_noise: DepthNoise,
    pub grid: GridSpec,
    pub gripper: GripperModel,
    pub collision: CollisionParams,
    pub labels: LabelParams,
    pub selection: SelectionParams,
    pub max_consecutive_failures: usize,
    pub pregrasp_distance: f64,
    pub camera_height: f64,
    pub bin: Bin,
    pub placement: PlacementParams,
    pub loss_weights: LossWeights,
    pub kappa: KappaMap,
}

impl Default for RunConfig {
    fn default() -> Self {
        let episode = EpisodeConfig::default();
        Self {
            master_seed: 0,
            preset: Preset::Easy,
            noise: None,
            depth_noise: DepthNoise::default(),
            grid: GridSpec::default(),
            gripper: GripperModel::default(),
            collision: CollisionParams::default(),
            labels: LabelParams::default(),
            selection: SelectionParams::default(),
            max_consecutive_failures: episode.max_consecutive_failures,
            pregrasp_distance: episode.exec.pregrasp_distance,
            camera_height: episode.camera_height,
            bin: Bin::default(),
            placement: PlacementParams::default(),
            loss_weights: LossWeights::default(),
            kappa: KappaMap::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.bin.validate()?;
        self.label_params().validate()?;
        self.depth_noise.validate()?;
        self.loss_weights.validate()?;
        if self.max_consecutive_failures == 0 {
            return Err(Error::invalid("max_consecutive_failures", "must be at least 1"));
        }
        if !(self.camera_height > self.bin.height) {
            return Err(Error::invalid("camera_height", "camera must sit above the bin"));
        }
        if !(self.kappa.kappa0 > 0.0) || !(self.kappa.eps > 0.0) {
            return Err(Error::invalid("kappa", "kappa0 and eps must be positive"));
        }
        Ok(())
    }

    /// Oracle parameters with the shared gripper and collision model.
    pub fn label_params(&self) -> LabelParams {
        LabelParams {
            gripper: self.gripper,
            collision: self.collision,
            ..self.labels
        }
    }

    pub fn noisy(&self) -> bool {
        self.noise.unwrap_or(self.preset.noisy_depth())
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            exec: ExecParams {
                gripper: self.gripper,
                collision: self.collision,
                pregrasp_distance: self.pregrasp_distance,
                ..ExecParams::default()
            },
            selection: self.selection,
            max_consecutive_failures: self.max_consecutive_failures,
            camera_height: self.camera_height,
            grid: self.grid,
            noise: self.noisy().then_some(self.depth_noise),
        }
    }
}

/// Scene id and file name stem of generated scene `index`.
pub fn scene_name(preset: Preset, index: usize) -> String {
    format!("{}-{index:04}", preset.name())
}

/// Generates scene `index` of the configured preset.
pub fn generate_scene(cfg: &RunConfig, index: usize) -> Result<(Scene, Vec<usize>)> {
    let seed = derive_seed(cfg.master_seed, index as u64);
    let n = preset_count(cfg.preset, derive_named(seed, "count"));
    let (scene, report) = make_scene(
        scene_name(cfg.preset, index),
        seed,
        n,
        &cfg.preset.pool(),
        &cfg.bin,
        &cfg.placement,
    )?;
    Ok((scene, report.skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGenEntry {
    pub scene_id: String,
    pub path: PathBuf,
    pub objects: usize,
    /// Objects that found no valid resting pose.
    pub skipped: Vec<usize>,
}

pub fn cmd_scene_gen(cfg: &RunConfig, count: usize, out: &Path) -> Result<Vec<SceneGenEntry>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let (scene, skipped) = generate_scene(cfg, i)?;
            let path = out.join(format!("{}.json", scene.id));
            write_scene(&path, &scene)?;
            Ok(SceneGenEntry {
                scene_id: scene.id.clone(),
                path,
                objects: scene.objects.len(),
                skipped,
            })
        })
        .collect()
}

/// Quality of a label recomputed from the object geometry: both contacts
/// are found again as boundary crossings of the baseline line.
pub fn recheck_quality(scene: &Scene, label: &GraspLabel) -> Option<f64> {
    let obj = scene.object(label.object_id)?;
    let c = label.config.c;
    let b = label.config.b.into_inner();
    let c2 = label.second_contact();
    let back = label.config.w + 0.05;
    let origin = c - b * back;
    let crossings = obj.crossings(&origin, &b);
    let nearest = |t: f64| {
        crossings
            .iter()
            .min_by(|x, y| (x.t - t).abs().total_cmp(&(y.t - t).abs()))
            .filter(|x| (x.t - t).abs() < 1e-6)
    };
    let n1 = nearest(back)?.normal;
    let n2 = nearest(back + label.config.w)?.normal;
    antipodal_quality(&c, &c2, &n1, &n2).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub scene_id: String,
    pub path: PathBuf,
    pub objects: usize,
    pub stats: LabelStats,
    pub grasps_per_object: Option<f64>,
    /// Labels whose recomputed quality is not above `q_min`; present when
    /// the re-check ran.
    pub recheck_failures: Option<usize>,
}

pub fn cmd_labels(cfg: &RunConfig, scenes: &[PathBuf], out: &Path, recheck: bool) -> Result<Vec<LabelSummary>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let params = cfg.label_params();
    let mut summaries = Vec::with_capacity(scenes.len());
    for path in scenes {
        let scene = read_scene(path)?;
        let (set, stats) = generate_labels(&scene, &params, derive_named(cfg.master_seed, &scene.id))?;
        let dest = out.join(format!("{}.labels.jsonl", scene.id));
        write_labels(&dest, &set)?;
        let recheck_failures = recheck.then(|| {
            set.labels
                .par_iter()
                .filter(|l| recheck_quality(&scene, l).is_none_or(|q| q <= params.q_min))
                .count()
        });
        let objects = scene.objects.len();
        summaries.push(LabelSummary {
            scene_id: scene.id.clone(),
            path: dest,
            objects,
            grasps_per_object: (objects > 0).then(|| set.labels.len() as f64 / objects as f64),
            stats,
            recheck_failures,
        });
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseSummary {
    pub tsdf: PathBuf,
    pub normals: PathBuf,
    pub observed_voxels: usize,
    pub surface_voxels: usize,
}

pub fn cmd_fuse(cfg: &RunConfig, depth: &Path, camera: &Path, out: &Path) -> Result<FuseSummary> {
    cfg.grid.validate()?;
    let image = read_depth(depth)?;
    let cam: CameraFile = read_json(camera)?;
    let tsdf = fuse_depth(&image, &cam.intrinsics, &cam.pose()?, &cfg.grid, default_trunc(&cfg.grid))?;
    let normals = tsdf_normals(&tsdf)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let summary = FuseSummary {
        tsdf: out.join("tsdf.json"),
        normals: out.join("normals.json"),
        observed_voxels: tsdf.observed_count(),
        surface_voxels: normals.present_count(),
    };
    write_tsdf(&summary.tsdf, &tsdf)?;
    write_normals(&summary.normals, &normals)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PredictorSpec {
    Oracle,
    /// A prediction JSONL file shared by every scene, or a directory of
    /// `<scene_id>.jsonl` files.
    File(PathBuf),
}

impl std::str::FromStr for PredictorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(PredictorSpec::Oracle);
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(PredictorSpec::File(PathBuf::from(p))),
            _ => Err(Error::invalid("predictor", format!("expected 'oracle' or 'file:<path>', got '{s}'"))),
        }
    }
}

impl std::fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictorSpec::Oracle => write!(f, "oracle"),
            PredictorSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl PredictorSpec {
    fn build(&self, cfg: &RunConfig, scene: &Scene) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            PredictorSpec::Oracle => Box::new(OraclePredictor::new(
                cfg.label_params(),
                derive_named(cfg.master_seed, &format!("oracle/{}", scene.id)),
            )),
            PredictorSpec::File(p) if p.is_dir() => Box::new(FilePredictor::load(&p.join(format!("{}.jsonl", scene.id)))?),
            PredictorSpec::File(p) => Box::new(FilePredictor::load(p)?),
        })
    }
}

/// Where evaluation scenes come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneSource {
    Files(Vec<PathBuf>),
    /// The first `n` scenes of the configured preset.
    Generated(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub predictor: String,
    pub master_seed: u64,
    pub noise: bool,
    pub metrics: Metrics,
    pub episodes: Vec<EpisodeTrace>,
}

pub fn run_eval(cfg: &RunConfig, source: &SceneSource, predictor: &PredictorSpec) -> Result<EvalReport> {
    cfg.validate()?;
    let scenes: Vec<Scene> = match source {
        SceneSource::Files(paths) => paths.iter().map(|p| read_scene(p)).collect::<Result<_>>()?,
        SceneSource::Generated(n) => (0..*n)
            .into_par_iter()
            .map(|i| generate_scene(cfg, i).map(|(s, _)| s))
            .collect::<Result<_>>()?,
    };
    if scenes.is_empty() {
        return Err(Error::invalid("scenes", "no scenes to evaluate"));
    }
    let episode = cfg.episode_config();
    let traces: Vec<EpisodeTrace> = scenes
        .into_par_iter()
        .map(|scene| {
            let mut p = predictor.build(cfg, &scene)?;
            let seed = derive_named(cfg.master_seed, &format!("episode/{}", scene.id));
            run_episode(scene, p.as_mut(), &episode, seed)
        })
        .collect::<Result<_>>()?;
    let results: Vec<_> = traces.iter().map(|t| t.result.clone()).collect();
    Ok(EvalReport {
        scenario: match source {
            SceneSource::Generated(_) => cfg.preset.name().to_string(),
            SceneSource::Files(_) => "files".to_string(),
        },
        predictor: predictor.to_string(),
        master_seed: cfg.master_seed,
        noise: cfg.noisy(),
        metrics: aggregate_metrics(&results)?,
        episodes: traces,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Writes `report.json`, `summary.csv` (one row per scenario) and
/// `episodes.csv` (one row per episode).
pub fn write_eval(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json = out.join("report.json");
    write_json(&json, report)?;

    let summary = out.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary).map_err(|e| csv_err(&summary, e))?;
    let m = &report.metrics;
    let rows = [
        vec!["scenario", "predictor", "episodes", "attempts", "successes", "objects_initial", "objects_removed", "sr", "cr"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>(),
        vec![
            report.scenario.clone(),
            report.predictor.clone(),
            m.episodes.to_string(),
            m.attempts.to_string(),
            m.successes.to_string(),
            m.objects_initial.to_string(),
            m.objects_removed.to_string(),
            opt(m.sr),
            opt(m.cr),
        ],
    ];
    for r in &rows {
        w.write_record(r).map_err(|e| csv_err(&summary, e))?;
    }
    w.flush().map_err(|e| Error::io(&summary, e))?;

    let episodes = out.join("episodes.csv");
    let mut w = csv::Writer::from_path(&episodes).map_err(|e| csv_err(&episodes, e))?;
    w.write_record(["scene_id", "attempts", "successes", "objects_initial", "objects_removed", "termination"])
        .map_err(|e| csv_err(&episodes, e))?;
    for t in &report.episodes {
        let r = &t.result;
        w.write_record([
            r.scene_id.clone(),
            r.attempts.to_string(),
            r.successes.to_string(),
            r.objects_initial.to_string(),
            r.objects_removed.to_string(),
            r.termination.name().to_string(),
        ])
        .map_err(|e| csv_err(&episodes, e))?;
    }
    w.flush().map_err(|e| Error::io(&episodes, e))?;
    Ok(vec![json, summary, episodes])
}

pub fn cmd_eval(cfg: &RunConfig, source: &SceneSource, predictor: &PredictorSpec, out: &Path) -> Result<EvalReport> {
    let report = run_eval(cfg, source, predictor)?;
    write_eval(&report, out)?;
    Ok(report)
}

/// `∫ pdf dΩ` over the sphere by Gauss-Legendre quadrature in `cos θ`.
pub fn ps_normalization(kappa: f64, nodes: usize) -> Result<f64> {
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::invalid("nodes", "need at least one node"))?;
    let d = PowerSpherical::new(unit(Vec3::z())?, kappa)?;
    let rule = GaussLegendre::new(n);
    let integral = rule.integrate(-1.0, 1.0, |t| {
        let s = (1.0 - t * t).max(0.0).sqrt();
        ps_log_pdf(&Vec3::new(s, 0.0, t), &d).map(f64::exp).unwrap_or(f64::NAN)
    });
    Ok(2.0 * std::f64::consts::PI * integral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationCheck {
    pub kappa: f64,
    pub nodes: usize,
    pub integral: f64,
    pub error: f64,
    pub pass: bool,
}

pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const NORMALIZATION_NODES: usize = 512;

pub fn ps_check(kappa: f64) -> Result<NormalizationCheck> {
    let integral = ps_normalization(kappa, NORMALIZATION_NODES)?;
    let error = (integral - 1.0).abs();
    Ok(NormalizationCheck {
        kappa,
        nodes: NORMALIZATION_NODES,
        integral,
        error,
        pass: error <= NORMALIZATION_TOL,
    })
}

/// `n` samples of `PS(μ, κ)` as `x,y,z` CSV lines.
pub fn ps_sample_csv(mu: &UnitVec3, kappa: f64, n: usize, seed: u64) -> Result<String> {
    let d = PowerSpherical::new(*mu, kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let x = ps_sample(&d, &mut rng);
        out.push_str(&format!("{},{},{}\n", x.x, x.y, x.z));
    }
    Ok(out)
}

pub fn ps_pdf(mu: &UnitVec3, kappa: f64, x: &Vec3) -> Result<f64> {
    let d = PowerSpherical::new(*mu, kappa)?;
    Ok(ps_log_pdf(&unit(*x)?.into_inner(), &d)?.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckEntry {
    pub instances: usize,
    /// Instances skipped because a parameter sat at a clamp boundary.
    pub excluded: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckReport {
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub losses: BTreeMap<String, LossCheckEntry>,
    pub pass: bool,
}

pub const GRAD_TOL: f64 = 1e-5;
pub const GRAD_STEP: f64 = 1e-6;

fn random_unit(rng: &mut ChaCha8Rng) -> UnitVec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return UnitVec3::new_normalize(v);
        }
    }
}

/// One voxel per instance: with several voxels the finite differences of
/// the mean carry the rounding of every other term.
fn check_focal(rng: &mut ChaCha8Rng, w: &LossWeights) -> f64 {
    let truth = [VoxelClass::ALL[rng.random_range(0..3)]];
    let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
    let f = |x: &[f64]| {
        let logits: Vec<[f64; 3]> = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let (l, g) = focal_loss(&logits, &truth, &w.class_weights, w.focal_gamma).expect("matching shapes");
        (l, g.into_iter().flatten().collect())
    };
    grad_check(f, &x, GRAD_STEP)
}

fn check_baseline(rng: &mut ChaCha8Rng, km: &KappaMap) -> Option<f64> {
    let kp = rng.random_range(0.15..1.1);
    if km.near_clamp(kp, 1e-4) {
        return None;
    }
    let center = random_unit(rng);
    let neighbors: Vec<UnitVec3> = (0..rng.random_range(1..=MAX_NEIGHBORS_CHECK))
        .map(|_| UnitVec3::new_normalize(center.into_inner() + random_unit(rng).into_inner() * 0.3))
        .collect();
    let nu = center.into_inner() * rng.random_range(0.5..2.0) + random_unit(rng).into_inner() * 0.2;
    let f = |x: &[f64]| {
        let l = nll_baseline(&Vec3::new(x[0], x[1], x[2]), x[3], &neighbors, km).expect("non-empty neighbors");
        (l.value, vec![l.grad_nu.x, l.grad_nu.y, l.grad_nu.z, l.grad_kappa_prime])
    };
    Some(grad_check(f, &[nu.x, nu.y, nu.z, kp], GRAD_STEP))
}

const MAX_NEIGHBORS_CHECK: usize = 16;

fn check_approach(rng: &mut ChaCha8Rng, km: &KappaMap) -> Option<f64> {
    let kp = rng.random_range(0.15..1.1);
    if km.near_clamp(kp, 1e-4) {
        return None;
    }
    let fan = FanSpec::default();
    let b = random_unit(rng);
    let nu_hat = UnitVec3::new_normalize(b.into_inner() + random_unit(rng).into_inner() * 0.1);
    let mut scores: Vec<f64> = (0..fan.n_r).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    scores[rng.random_range(0..fan.n_r)] = 1.0;
    let truth = GraspConfiguration {
        c: Vec3::zeros(),
        b,
        approaches: approach_set(&b, fan.n_r, fan.lo, fan.hi)
            .expect("default fan")
            .into_iter()
            .map(|(_, a)| a)
            .collect(),
        collision_scores: scores,
        w: 0.03,
        q: 1.0,
    };
    let f = |x: &[f64]| {
        let l = nll_approach(x[0], &nu_hat, &truth, &fan, km).expect("a free approach");
        (l.value, vec![l.grad_kappa_prime])
    };
    Some(grad_check(f, &[kp], GRAD_STEP))
}

fn check_width(rng: &mut ChaCha8Rng) -> f64 {
    let c = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.1));
    let b = random_unit(rng);
    let pairs: Vec<(Vec3, Vec3)> = (0..rng.random_range(1..=4))
        .map(|_| {
            let t1 = c + random_unit(rng).into_inner() * rng.random_range(0.0..0.003);
            let dir = UnitVec3::new_normalize(b.into_inner() + random_unit(rng).into_inner() * 0.2);
            (t1, t1 + dir.into_inner() * rng.random_range(0.01..0.07))
        })
        .collect();
    let w0 = rng.random_range(0.01..0.07);
    let f = |x: &[f64]| {
        let (l, g) = width_loss(&c, &b, x[0], &pairs).expect("non-empty pairs");
        (l, vec![g])
    };
    grad_check(f, &[w0], GRAD_STEP)
}

fn check_quality(rng: &mut ChaCha8Rng) -> Option<f64> {
    let (qp, qt): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    if (qp - qt).abs() < 1e-4 {
        return None;
    }
    let f = |x: &[f64]| {
        let (l, g) = quality_l1(x[0], qt);
        (l, vec![g])
    };
    Some(grad_check(f, &[qp], GRAD_STEP))
}

/// Finite-difference audit of every loss gradient on `instances` random
/// cases each.
pub fn cmd_loss_check(cfg: &RunConfig, instances: usize) -> Result<LossCheckReport> {
    cfg.validate()?;
    let mut losses = BTreeMap::new();
    type Check<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> Option<f64> + 'a>;
    let checks: Vec<(&str, Check)> = vec![
        ("focal", Box::new(|r: &mut ChaCha8Rng| Some(check_focal(r, &cfg.loss_weights)))),
        ("nll_baseline", Box::new(|r: &mut ChaCha8Rng| check_baseline(r, &cfg.kappa))),
        ("nll_approach", Box::new(|r: &mut ChaCha8Rng| check_approach(r, &cfg.kappa))),
        ("width", Box::new(|r: &mut ChaCha8Rng| Some(check_width(r)))),
        ("quality", Box::new(check_quality)),
    ];
    for (name, check) in &checks {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_named(cfg.master_seed, name));
        let (mut done, mut excluded, mut worst) = (0, 0, 0.0f64);
        while done < instances {
            match check(&mut rng) {
                Some(e) => {
                    worst = worst.max(e);
                    done += 1;
                }
                None => excluded += 1,
            }
        }
        losses.insert(
            name.to_string(),
            LossCheckEntry {
                instances: done,
                excluded,
                max_rel_err: worst,
            },
        );
    }
    let pass = losses.values().all(|e| e.max_rel_err <= GRAD_TOL);
    Ok(LossCheckReport {
        seed: cfg.master_seed,
        step: GRAD_STEP,
        tolerance: GRAD_TOL,
        losses,
        pass,
    })
}
