use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use psgrasp::cli::{
    cmd_eval, cmd_fuse, cmd_labels, cmd_loss_check, cmd_scene_gen, ps_check, ps_pdf, ps_sample_csv, PredictorSpec,
    RunConfig, SceneSource,
};
use psgrasp::geom::{unit, Vec3};
use psgrasp::oracle::Preset;
use psgrasp::Error;

#[derive(Parser, Debug)]
#[command(name = "psgrasp", version, about = "Probabilistic 6-DoF grasp modeling for bin picking")]
struct Cli {
    /// Run configuration (JSON); unset fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    noise: Option<Toggle>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate cluttered bin scenes.
    SceneGen {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate dense grasp labels for scene files.
    Labels {
        #[arg(required = true)]
        scenes: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Recompute every label's quality from the geometry.
        #[arg(long)]
        recheck: bool,
    },
    /// Fuse a depth image into a TSDF and normal grid.
    Fuse {
        #[arg(long)]
        depth: PathBuf,
        /// Camera JSON: intrinsics and optional camera-to-world pose.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run clearing episodes and report SR and CR.
    Eval {
        /// Scene files; without them the first `--count` preset scenes are generated.
        scenes: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value = "oracle")]
        predictor: PredictorSpec,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power-Spherical utilities.
    Ps {
        #[command(subcommand)]
        action: PsAction,
    },
    /// Check every loss gradient against finite differences.
    LossCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum PsAction {
    /// Draw samples as x,y,z CSV lines.
    Sample {
        #[arg(long, value_parser = parse_vec, default_value = "0,0,1")]
        mu: Vec3,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Density at a direction.
    Pdf {
        #[arg(long, value_parser = parse_vec, default_value = "0,0,1")]
        mu: Vec3,
        #[arg(long)]
        kappa: f64,
        #[arg(long, value_parser = parse_vec)]
        x: Vec3,
    },
    /// Quadrature check of the normalization.
    Check {
        #[arg(long, num_args = 1.., required = true)]
        kappa: Vec<f64>,
    },
}

fn parse_vec(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err(format!("expected three comma-separated numbers, got '{s}'")),
    }
}

enum Failure {
    Usage(String),
    Validation(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Image(_) => Failure::Io(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Validation(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn write_report<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Validation(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::Io(format!("i/o error on {}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(p) = cli.preset {
        cfg.preset = p;
    }
    if let Some(t) = cli.noise {
        cfg.noise = Some(matches!(t, Toggle::On));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::SceneGen { count, out } => print_json(&cmd_scene_gen(&cfg, count, &out)?),
        Command::Labels { scenes, out, recheck } => {
            let summaries = cmd_labels(&cfg, &scenes, &out, recheck)?;
            print_json(&summaries)?;
            if summaries.iter().any(|s| s.recheck_failures.is_some_and(|f| f > 0)) {
                return Err(Failure::Validation("some labels failed the quality re-check".into()));
            }
            Ok(())
        }
        Command::Fuse { depth, camera, out } => print_json(&cmd_fuse(&cfg, &depth, &camera, &out)?),
        Command::Eval {
            scenes,
            count,
            predictor,
            out,
        } => {
            let source = if scenes.is_empty() {
                SceneSource::Generated(count)
            } else {
                SceneSource::Files(scenes)
            };
            let report = cmd_eval(&cfg, &source, &predictor, &out)?;
            print_json(&report.metrics)
        }
        Command::Ps { action } => match action {
            PsAction::Sample { mu, kappa, n } => {
                print!("{}", ps_sample_csv(&unit(mu)?, kappa, n, cfg.master_seed)?);
                Ok(())
            }
            PsAction::Pdf { mu, kappa, x } => {
                println!("{}", ps_pdf(&unit(mu)?, kappa, &x)?);
                Ok(())
            }
            PsAction::Check { kappa } => {
                let checks = kappa.iter().map(|k| ps_check(*k)).collect::<Result<Vec<_>, _>>()?;
                print_json(&checks)?;
                if checks.iter().any(|c| !c.pass) {
                    return Err(Failure::Validation("normalization outside tolerance".into()));
                }
                Ok(())
            }
        },
        Command::LossCheck { instances, out } => {
            let report = cmd_loss_check(&cfg, instances)?;
            match &out {
                Some(p) => write_report(p, &report)?,
                None => print_json(&report)?,
            }
            if !report.pass {
                return Err(Failure::Validation("gradient check above tolerance".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
