use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::GraspConfiguration;
use crate::oracle::{generate_labels, LabelParams, Scene};
use crate::seed::derive_seed;
use crate::volumetric::io::read_label_grid;
use crate::volumetric::{build_label_grid, LabelGrid, NormalGrid};

/// Predictor output for one observation: an optional label grid and grasp
/// configurations carrying the priors `q'` and `σ'`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub label_grid: Option<LabelGrid>,
    pub configs: Vec<GraspConfiguration>,
    /// Concentration output `κ'` per configuration.
    pub kappa_prime: Vec<f64>,
}

impl Prediction {
    pub fn validate(&self, normals: &NormalGrid) -> Result<()> {
        if self.kappa_prime.len() != self.configs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} configurations but {} concentration values",
                self.configs.len(),
                self.kappa_prime.len()
            )));
        }
        if let Some(g) = &self.label_grid {
            if g.spec != normals.spec {
                return Err(Error::ShapeMismatch("label grid does not match the observation grid".into()));
            }
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        for (i, c) in self.configs.iter().enumerate() {
            c.validate()?;
            if !normals.spec.contains(&c.c) {
                return Err(Error::invalid("prediction", format!("contact {i} lies outside the grid")));
            }
            if !unit(c.q) || !c.collision_scores.iter().all(|s| unit(*s)) {
                return Err(Error::invalid("prediction", format!("configuration {i} has scores outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// What a predictor sees at each step of an episode.
pub struct Observation<'a> {
    pub normals: &'a NormalGrid,
    pub step: usize,
    /// Ground truth, available to oracle predictors only by convention.
    pub scene: &'a Scene,
}

pub trait Predictor {
    fn predict(&mut self, obs: &Observation<'_>) -> Result<Prediction>;
}

/// Ground-truth labels of the current scene, regenerated every step.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub params: LabelParams,
    pub seed: u64,
    /// Chebyshev growth of the label grid so that interpolation at a true
    /// contact stays at full confidence.
    pub dilation: usize,
}

impl OraclePredictor {
    pub fn new(params: LabelParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            dilation: 1,
        }
    }
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, obs: &Observation<'_>) -> Result<Prediction> {
        let (set, _) = generate_labels(obs.scene, &self.params, derive_seed(self.seed, obs.step as u64))?;
        let grid = build_label_grid(&set, &obs.normals.spec)?.grid.dilated(self.dilation);
        let configs: Vec<GraspConfiguration> = set
            .labels
            .into_iter()
            .filter(|l| obs.normals.spec.contains(&l.config.c))
            .map(|l| l.config)
            .collect();
        Ok(Prediction {
            label_grid: Some(grid),
            kappa_prime: vec![0.0; configs.len()],
            configs,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeader {
    /// Label-grid header path, relative to the prediction file.
    #[serde(default)]
    pub label_grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub config: GraspConfiguration,
    #[serde(default)]
    pub kappa_prime: f64,
    /// Episode step the record applies to; `None` applies to every step.
    #[serde(default)]
    pub step: Option<usize>,
}

/// Predictions produced offline by an external model.
#[derive(Debug, Clone)]
pub struct FilePredictor {
    pub label_grid: Option<LabelGrid>,
    pub records: Vec<PredictionRecord>,
}

impl FilePredictor {
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut header = PredictionHeader::default();
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            if n == 0 && value.get("config").is_none() {
                header = serde_json::from_value(value).map_err(|e| Error::format(path, format!("header: {e}")))?;
                continue;
            }
            let record: PredictionRecord =
                serde_json::from_value(value).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            records.push(record);
        }
        let label_grid = header
            .label_grid
            .map(|p| read_label_grid(&base.join(p)))
            .transpose()?;
        Ok(Self { label_grid, records })
    }
}

impl Predictor for FilePredictor {
    fn predict(&mut self, obs: &Observation<'_>) -> Result<Prediction> {
        let (configs, kappa_prime) = self
            .records
            .iter()
            .filter(|r| r.step.is_none_or(|s| s == obs.step))
            .map(|r| (r.config.clone(), r.kappa_prime))
            .unzip();
        let p = Prediction {
            label_grid: self.label_grid.clone(),
            configs,
            kappa_prime,
        };
        p.validate(obs.normals)?;
        Ok(p)
    }
}
