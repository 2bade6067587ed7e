//! Score composition, the grasp-selection policy and clearing episodes.

mod episode;
mod predictor;
mod render;
mod select;

pub use episode::{
    aggregate_metrics, execute_virtual, pregrasp_collides, run_episode, Attempt, EpisodeConfig, EpisodeResult,
    EpisodeTrace, ExecParams, Metrics, Outcome, Termination,
};
pub use predictor::{
    FilePredictor, Observation, OraclePredictor, Prediction, PredictionHeader, PredictionRecord, Predictor,
};
pub use render::{render_depth, Camera, DepthNoise};
pub use select::{
    approach_order, compose_all, compose_collision, compose_quality, config_order, select_next_grasp,
    SelectionParams,
};
