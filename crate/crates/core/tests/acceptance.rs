//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::Isometry3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use psgrasp::cli::{cmd_loss_check, generate_scene, run_eval, write_eval, PredictorSpec, RunConfig, SceneSource};
use psgrasp::geom::{grasp_pose, unit, Vec3};
use psgrasp::oracle::{
    antipodal_quality, find_opposing_contact, generate_labels, write_labels, Bin, Preset, Scene,
    SceneObject, Shape, SurfaceSample,
};
use psgrasp::power_spherical::{ps_log_pdf, ps_rotate, ps_sample, PowerSpherical};
use psgrasp::scoring::{
    render_depth, run_episode, select_next_grasp, Camera, EpisodeConfig, Outcome, SelectionParams, Termination,
};
use psgrasp::volumetric::{default_trunc, fuse_depth, trilinear, tsdf_normals, GridSpec};

type Verdict = Result<String, String>;

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Verdict {
    if elapsed > limit {
        Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail}; {elapsed:.2?}"))
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn ps_normalization() -> Verdict {
    let start = Instant::now();
    let rule = gauss_legendre(512);
    let mu = unit(Vec3::z()).unwrap();
    let mut worst: f64 = 0.0;
    for kappa in [1e-9, 1.0, 25.0, 100.0] {
        let d = PowerSpherical::new(mu, kappa).unwrap();
        let integral: f64 = rule
            .iter()
            .map(|(t, w)| {
                let s = (1.0 - t * t).sqrt();
                w * ps_log_pdf(&Vec3::new(s, 0.0, *t), &d).unwrap().exp()
            })
            .sum::<f64>()
            * 2.0
            * std::f64::consts::PI;
        worst = worst.max((integral - 1.0).abs());
    }
    let detail = format!("max |integral - 1| = {worst:.2e}");
    check(worst <= 1e-6, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(1), detail)
}

fn ps_sampler() -> Verdict {
    let start = Instant::now();
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for kappa in [1.0, 25.0, 100.0] {
        let mu = random_unit(&mut rng);
        let d = PowerSpherical::new(mu, kappa).unwrap();
        let cos: Vec<f64> = (0..n).map(|_| ps_sample(&d, &mut rng).dot(&mu)).collect();
        let mean = cos.iter().sum::<f64>() / n as f64;
        let var = cos.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        worst = worst.max((mean - kappa / (kappa + 2.0)).abs() / se);
    }
    let detail = format!("max deviation {worst:.2} SE");
    check(worst <= 3.0, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(10), detail)
}

fn rotation_closure() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r = random_rotation(&mut rng);
        let x = random_unit(&mut rng).into_inner();
        let kappa = rng.random_range(1e-9..=100.0);
        let d = PowerSpherical::new(random_unit(&mut rng), kappa).unwrap();
        let rotated = ps_rotate(&d, &r).unwrap();
        let diff = ps_log_pdf(&(r * x), &rotated).unwrap() - ps_log_pdf(&x, &d).unwrap();
        worst = worst.max(diff.abs());
    }
    check(worst <= 1e-12, format!("max log-pdf change {worst:.2e}"))
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let report = cmd_loss_check(&RunConfig::default(), 100).map_err(|e| e.to_string())?;
    let parts: Vec<String> = report
        .losses
        .iter()
        .map(|(k, e)| format!("{k} {:.1e} ({} inst)", e.max_rel_err, e.instances))
        .collect();
    let all_counted = report.losses.values().all(|e| e.instances == 100);
    let detail = parts.join(", ");
    check(report.pass && all_counted && report.losses.len() == 5, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(30), detail)
}

fn oracle_soundness() -> Verdict {
    let start = Instant::now();
    let cfg = RunConfig {
        preset: Preset::Medium,
        master_seed: 2026,
        ..RunConfig::default()
    };
    let params = cfg.label_params();
    let spacing = params.collision.probe_spacing / 2.0;
    let (mut labels, mut low_q, mut free, mut hits) = (0, 0, 0, 0);
    single_thread(|| {
        for i in 0..20 {
            let (scene, _) = generate_scene(&cfg, i).unwrap();
            let (set, _) = generate_labels(&scene, &params, i as u64).unwrap();
            for l in &set.labels {
                labels += 1;
                let obj = scene.object(l.object_id).unwrap();
                let c2 = l.second_contact();
                let q = antipodal_quality(&l.config.c, &c2, &sdf_normal(obj, &l.config.c), &sdf_normal(obj, &c2)).unwrap();
                if q.is_nan() || q <= 0.5 {
                    low_q += 1;
                }
                for (ai, s) in l.config.collision_scores.iter().enumerate() {
                    if *s != 1.0 {
                        continue;
                    }
                    free += 1;
                    let pose = grasp_pose(&l.config.grasp(ai), &params.gripper).unwrap();
                    if dense_collides(&scene, &pose, &params.gripper, params.collision.finger_clearance, l.object_id, spacing) {
                        hits += 1;
                    }
                }
            }
        }
    });
    let detail = format!("{labels} labels, {low_q} below q 0.5; {free} free approaches, {hits} colliding on re-check");
    check(labels > 0 && free > 0 && low_q == 0 && hits == 0, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(600), detail)
}

fn clearing() -> Verdict {
    let start = Instant::now();
    let cfg = RunConfig {
        preset: Preset::Easy,
        master_seed: 2026,
        ..RunConfig::default()
    };
    let report = run_eval(&cfg, &SceneSource::Generated(20), &PredictorSpec::Oracle).map_err(|e| e.to_string())?;
    let m = &report.metrics;
    let (sr, cr) = (m.sr.unwrap_or(0.0), m.cr.unwrap_or(0.0));
    let detail = format!("SR {sr:.3} CR {cr:.3} over {} episodes", m.episodes);
    check(m.episodes == 20 && cr >= 0.9 && sr >= 0.8, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(300), detail)
}

fn selection_sequence() -> Vec<(usize, usize)> {
    let high = |idx: &[usize], v: f64| {
        let mut s = vec![0.1; 18];
        for i in idx {
            s[*i] = v;
        }
        s
    };
    let mut k1 = vec![0.1; 18];
    k1[17] = 0.6;
    k1[3] = 0.51;
    k1[5] = 0.5;
    let b = Vec3::x();
    let configs = vec![
        fan_config(Vec3::new(0.05, 0.0, 0.1), b, 0.03, 0.7, high(&(0..10).collect::<Vec<_>>(), 0.9)),
        fan_config(Vec3::new(0.0, 0.05, 0.1), b, 0.03, 0.95, k1),
        fan_config(Vec3::new(0.0, 0.0, 0.1), b, 0.03, 0.5, vec![1.0; 18]),
        fan_config(Vec3::new(0.0, 0.0, 0.1), b, 0.03, 0.7, high(&[2], 1.0)),
    ];
    let mut tried = HashSet::new();
    let mut seq = Vec::new();
    while let Some(pick) = select_next_grasp(&configs, &tried, &SelectionParams::default()) {
        tried.insert(pick);
        seq.push(pick);
    }
    seq
}

fn protocol_fidelity() -> Verdict {
    let mut expected = vec![(1, 17), (1, 3), (3, 2)];
    expected.extend((0..8).map(|a| (0, a)));
    let seq = selection_sequence();
    check(seq == expected, format!("selection order {seq:?}"))?;

    let cfg = EpisodeConfig::default();
    let b = Vec3::x();
    let near_vertical = |v8: f64, v9: f64| {
        let mut s = vec![0.2; 18];
        s[8] = v8;
        s[9] = v9;
        s
    };
    let mut scene = Scene::empty("fail", Bin::default());
    scene.objects.push(sphere(1, Vec3::new(0.2, 0.1, 0.03), 0.03));
    let mut failing = Scripted {
        configs: vec![
            fan_config(Vec3::new(0.0, -0.05, 0.15), b, 0.04, 0.5, vec![1.0; 18]),
            fan_config(Vec3::new(0.05, 0.0, 0.15), b, 0.04, 0.8, near_vertical(0.9, 0.8)),
            fan_config(Vec3::new(-0.05, 0.0, 0.15), b, 0.04, 0.95, vec![0.5; 18]),
            fan_config(Vec3::new(0.0, 0.0, 0.15), b, 0.04, 0.9, near_vertical(0.9, 0.8)),
        ],
        calls: 0,
    };
    let trace = run_episode(scene, &mut failing, &cfg, 1).map_err(|e| e.to_string())?;
    let picks: Vec<(usize, usize, Outcome)> = trace.attempts.iter().map(|a| (a.config, a.approach, a.outcome)).collect();
    let want = vec![(3, 8, Outcome::Unstable), (3, 9, Outcome::Unstable), (1, 8, Outcome::Unstable)];
    check(
        picks == want && trace.result.termination == Termination::ThreeFailures,
        format!("failure episode {picks:?} {:?}", trace.result.termination),
    )?;

    let mut scene = Scene::empty("grab", Bin::default());
    scene.objects.push(sphere(7, Vec3::new(0.0, 0.0, 0.03), 0.03));
    let mut scores = vec![0.0; 18];
    scores[9] = 1.0;
    let mut grab = Scripted {
        configs: vec![fan_config(Vec3::new(-0.03, 0.0, 0.03), b, 0.06, 1.0, scores)],
        calls: 0,
    };
    let trace = run_episode(scene, &mut grab, &cfg, 2).map_err(|e| e.to_string())?;
    let picks: Vec<(usize, usize, Outcome)> = trace.attempts.iter().map(|a| (a.config, a.approach, a.outcome)).collect();
    check(
        picks == vec![(0, 9, Outcome::Success { object_id: 7 })] && trace.result.termination == Termination::Cleared,
        format!("grasp episode {picks:?} {:?}", trace.result.termination),
    )?;
    Ok(format!("{} scripted selections and two scripted episodes match", expected.len()))
}

fn determinism() -> Verdict {
    let cfg = RunConfig {
        preset: Preset::Easy,
        master_seed: 99,
        noise: Some(true),
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in [1, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = dir.path().join(format!("t{threads}"));
        let files = pool
            .install(|| {
                let report = run_eval(&cfg, &SceneSource::Generated(6), &PredictorSpec::Oracle)?;
                let mut files = write_eval(&report, &out)?;
                let (scene, _) = generate_scene(&RunConfig { preset: Preset::Medium, ..cfg }, 0)?;
                let (set, _) = generate_labels(&scene, &cfg.label_params(), 5)?;
                let labels = out.join("labels.jsonl");
                write_labels(&labels, &set)?;
                files.push(labels);
                psgrasp::Result::Ok(files)
            })
            .map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        outputs.push(bytes);
    }
    check(
        outputs[0] == outputs[1],
        format!("{} files compared at 1 and 8 threads", outputs[0].len()),
    )
}

fn volumetric_fixtures() -> Verdict {
    let spec = GridSpec::default();
    let camera = Camera::default();
    let trunc = default_trunc(&spec);

    let empty = Scene::empty("plane", Bin::default());
    let depth = render_depth(&empty, &camera);
    let tsdf = fuse_depth(&depth, &camera.intrinsics, &camera.pose, &spec, trunc).map_err(|e| e.to_string())?;
    let normals = tsdf_normals(&tsdf).map_err(|e| e.to_string())?;
    let (mut count, mut worst) = (0, 0.0f64);
    for (idx, n) in normals.normals.iter().enumerate() {
        let p = spec.center_of(idx);
        if let Some(n) = n {
            if p.x.abs() < 0.2 && p.y.abs() < 0.13 && p.z < 0.05 {
                count += 1;
                worst = worst.max(n.dot(&Vec3::z()).clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
    }
    check(count > 100 && worst <= 2.0, format!("plane: {count} normals, worst {worst:.3} deg"))?;

    let (center, r) = (Vec3::new(0.0045, 0.0045, 0.05), 0.04);
    let mut scene = Scene::empty("sphere", Bin::default());
    scene.objects.push(sphere(1, center, r));
    let depth = render_depth(&scene, &camera);
    let tsdf = fuse_depth(&depth, &camera.intrinsics, &camera.pose, &spec, trunc).map_err(|e| e.to_string())?;
    let [i, j, _] = spec.voxel_of(&center).unwrap();
    let crossing = (0..spec.n - 1).find_map(|k| {
        let (a, b) = (spec.index(i, j, k), spec.index(i, j, k + 1));
        let (va, vb) = (tsdf.values[a], tsdf.values[b]);
        (tsdf.observed(a) && tsdf.observed(b) && va < 0.0 && vb >= 0.0)
            .then(|| spec.center(i, j, k).z + va / (va - vb) * spec.voxel_size)
    });
    let Some(z) = crossing else {
        return Err("sphere: no zero crossing above the center".into());
    };
    let err = (z - (center.z + r)).abs() / spec.voxel_size;
    check(err <= 0.5, format!("sphere crossing off by {err:.3} voxel"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (a0, g) = (rng.random_range(-1.0..1.0), random_unit(&mut rng).into_inner() * 3.0);
    let values: Vec<f64> = (0..spec.len()).map(|idx| a0 + g.dot(&spec.center_of(idx))).collect();
    let lo = spec.center(0, 0, 0);
    let hi = spec.center(spec.n - 1, spec.n - 1, spec.n - 1);
    let mut worst_lin: f64 = 0.0;
    for _ in 0..1000 {
        let p = Vec3::new(
            rng.random_range(lo.x..hi.x),
            rng.random_range(lo.y..hi.y),
            rng.random_range(lo.z..hi.z),
        );
        worst_lin = worst_lin.max((trilinear(&spec, &values, &p) - (a0 + g.dot(&p))).abs());
    }
    check(worst_lin <= 1e-12, format!("trilinear error {worst_lin:.1e}"))?;
    Ok(format!(
        "plane {worst:.3} deg, sphere {err:.3} voxel, trilinear {worst_lin:.1e}"
    ))
}

fn antipodal_closed_forms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_box: f64 = 0.0;
    for _ in 0..20 {
        let rot = random_rotation(&mut rng);
        let q = nalgebra::UnitQuaternion::from_matrix(&rot);
        let half = Vec3::new(0.03, 0.02, 0.025);
        let center = Vec3::new(0.0, 0.0, 0.1);
        let mut scene = Scene::empty("box", Bin::default());
        scene.objects.push(SceneObject {
            id: 3,
            shape: Shape::Box { half_extents: half },
            pose: Isometry3::from_parts(center.into(), q),
        });
        let axis = rng.random_range(0..3);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut local = Vec3::new(
            rng.random_range(-0.8..0.8) * half.x,
            rng.random_range(-0.8..0.8) * half.y,
            rng.random_range(-0.8..0.8) * half.z,
        );
        local[axis] = sign * half[axis];
        let mut n = Vec3::zeros();
        n[axis] = sign;
        let sample = SurfaceSample {
            point: center + rot * local,
            normal: unit(rot * n).unwrap(),
            object_id: 3,
        };
        let (c2, n2) = find_opposing_contact(&scene, &sample, 0.08).ok_or("box: no opposing face")?;
        let q = antipodal_quality(&sample.point, &c2, &sample.normal, &n2).map_err(|e| e.to_string())?;
        worst_box = worst_box.max((q - 1.0).abs());
    }
    let mut worst_sphere: f64 = 0.0;
    for theta in [30.0f64, 45.0, 60.0].map(f64::to_radians) {
        let (c, r) = (Vec3::new(0.01, -0.02, 0.05), 0.04);
        let n1 = Vec3::new(theta.cos(), theta.sin(), 0.0);
        let n2 = Vec3::new(theta.cos(), -theta.sin(), 0.0);
        let q = antipodal_quality(&(c + n1 * r), &(c + n2 * r), &n1, &n2).map_err(|e| e.to_string())?;
        worst_sphere = worst_sphere.max((q - theta.sin().powi(2)).abs());
    }
    check(
        worst_box <= 1e-12 && worst_sphere <= 1e-12,
        format!("box |q - 1| {worst_box:.1e}, sphere |q - sin^2| {worst_sphere:.1e}"),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("PS normalization", ps_normalization),
        ("PS sampler statistics", ps_sampler),
        ("rotation closure", rotation_closure),
        ("gradient suite", gradient_suite),
        ("oracle soundness", oracle_soundness),
        ("clearing analog", clearing),
        ("protocol fidelity", protocol_fidelity),
        ("determinism", determinism),
        ("volumetric fixtures", volumetric_fixtures),
        ("antipodal closed forms", antipodal_closed_forms),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
