use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::planner::EpisodeRun;
use crate::scene::{Episode, GeodesicField};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum InvalidReason {
    #[error("goal is not reachable from the start")]
    DisconnectedGoal,
    #[error("final pose has no path to the goal")]
    UnreachableFinalPose,
    #[error("episode failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: String,
    pub success: bool,
    pub stopped: bool,
    pub ne: f64,
    pub tl: f64,
    pub spl: f64,
    /// Start-to-goal geodesic distance.
    pub geodesic: f64,
    pub steps: usize,
    pub collisions: usize,
    pub seed: u64,
    /// Candidate scorings gated / imagined over the episode.
    pub gated: usize,
    pub imagined: usize,
    /// Digest of the executed trajectory and chosen candidate ids.
    pub trace: String,
}

/// `success * geodesic / max(geodesic, tl)`.
pub fn spl(success: bool, geodesic: f64, tl: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = geodesic.max(tl);
    if denom <= 0.0 {
        1.0
    } else {
        geodesic / denom
    }
}

/// Success requires a STOP within `success_radius` (geodesic) of the goal.
pub fn compute_metrics(
    episode: &Episode,
    field: &GeodesicField,
    final_pose: &Pose,
    tl: f64,
    stopped: bool,
) -> Result<(bool, f64, f64, f64), InvalidReason> {
    let geodesic = field.distance(episode.start.position());
    if !geodesic.is_finite() {
        return Err(InvalidReason::DisconnectedGoal);
    }
    let ne = field.distance(final_pose.position());
    if !ne.is_finite() {
        return Err(InvalidReason::UnreachableFinalPose);
    }
    let success = stopped && ne <= episode.success_radius;
    Ok((success, ne, spl(success, geodesic, tl), geodesic))
}

pub fn episode_result(
    episode: &Episode,
    field: &GeodesicField,
    run: &EpisodeRun,
    seed: u64,
) -> Result<EpisodeResult, InvalidReason> {
    let (success, ne, spl, geodesic) = compute_metrics(episode, field, &run.final_pose, run.tl, run.stopped)?;
    Ok(EpisodeResult {
        id: episode.id.clone(),
        success,
        stopped: run.stopped,
        ne,
        tl: run.tl,
        spl,
        geodesic,
        steps: run.steps,
        collisions: run.collisions,
        seed,
        gated: run.gated,
        imagined: run.imagined,
        trace: trace_digest(run),
    })
}

pub fn trace_digest(run: &EpisodeRun) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for p in &run.trajectory {
        for v in [p.x, p.y, p.theta] {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for &c in &run.chosen {
        h.update((c as u64).to_le_bytes());
    }
    h.update([u8::from(run.stopped)]);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub tl: f64,
    pub ne: f64,
    /// Gated fraction of all imagined candidate scorings.
    pub fallback_rate: f64,
}

impl Aggregates {
    pub fn from_rows(rows: &[EpisodeResult]) -> Self {
        let n = rows.len();
        let mean = |f: &dyn Fn(&EpisodeResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                rows.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let gated: usize = rows.iter().map(|r| r.gated).sum();
        let imagined: usize = rows.iter().map(|r| r.imagined).sum();
        Self {
            episodes: n,
            sr: mean(&|r| f64::from(u8::from(r.success))),
            spl: mean(&|r| r.spl),
            tl: mean(&|r| r.tl),
            ne: mean(&|r| r.ne),
            fallback_rate: if imagined == 0 { 0.0 } else { gated as f64 / imagined as f64 },
        }
    }
}
