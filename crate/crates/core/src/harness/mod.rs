//! Metrics, suite generation and execution, ablation and gate sweeps, and
//! log rendering.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod render;
pub mod suite;

use thiserror::Error;

pub use config::{ModelConfig, ModelKind, SuiteConfig, SuiteSpec};
pub use experiments::{ablate, ablation_csv, sweep_csv, sweep_theta, AblationMode, SweepPoint};
pub use metrics::{compute_metrics, spl, Aggregates, EpisodeResult, InvalidReason};
pub use suite::{
    calibrate, calibrate_episodes, generate_suite, load_suite, run_scored_episode, run_suite, write_suite, InvalidEpisode,
    Manifest, ManifestEntry, RunOptions, Suite, SuiteReport,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("suite has no episodes")]
    EmptySuite,
    #[error("suite generation failed: {0}")]
    Generation(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("report aggregates do not match its rows")]
    AggregateMismatch,
    #[error("log replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Scene(#[from] crate::scene::SceneError),
    #[error(transparent)]
    Planner(#[from] crate::planner::PlannerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}
