//! Imagination-to-value head and language prior.
//!
//! Imagined frames are scored per ray, splatted into an agent-centered
//! [`EgoGrid`], smoothed, and aggregated across rollout steps with a
//! discounted log-sum-exp. The live observation yields a softmax prior over
//! rays splatted the same way.

mod grid;

pub use grid::{aggregate, gate, lse, Accumulate, EgoGrid, EGO_SIDE, EGO_WINDOW};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec2};
use crate::scene::{Observation, Scene, Semantic, SensorConfig};
use crate::world_model::{ImaginedFrame, Rollout, SIGMA_CEILING};

#[derive(Debug, Error, PartialEq)]
pub enum ValueError {
    #[error("cue weight {0} must be finite and nonnegative")]
    NegativeWeight(&'static str),
    #[error("parameter {0} out of range")]
    OutOfRange(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueWeights {
    pub w_align: f64,
    pub w_trav: f64,
    pub w_obs: f64,
    pub t_frame: f64,
    /// Depth below which a ray counts as blocked.
    pub d_near: f64,
}

impl Default for CueWeights {
    fn default() -> Self {
        Self {
            w_align: 1.0,
            w_trav: 0.5,
            w_obs: 0.5,
            t_frame: 1.0,
            d_near: 0.5,
        }
    }
}

impl CueWeights {
    pub fn new(w_align: f64, w_trav: f64, w_obs: f64, t_frame: f64) -> Result<Self, ValueError> {
        let w = Self {
            w_align,
            w_trav,
            w_obs,
            t_frame,
            ..Self::default()
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ValueError> {
        for (name, v) in [("w_align", self.w_align), ("w_trav", self.w_trav), ("w_obs", self.w_obs)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ValueError::NegativeWeight(name));
            }
        }
        if !(self.t_frame.is_finite() && self.t_frame > 0.0) {
            return Err(ValueError::OutOfRange("t_frame"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub gamma: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
    pub t_prior: f64,
    /// Deposit each ray's score along its whole visible extent instead of
    /// only at its endpoint.
    pub column_projection: bool,
    /// Column samples closer than this to the sensor are skipped, meters.
    /// Every ray passes through the sensor's own cell, which would otherwise
    /// carry the frame's best score regardless of direction.
    pub column_start: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            beta: 16.0,
            lambda1: 1.0,
            lambda2: 0.5,
            theta: 0.6,
            t_prior: 0.1,
            column_projection: true,
            column_start: 0.5,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), ValueError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ValueError::OutOfRange("gamma"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ValueError::OutOfRange("beta"));
        }
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return Err(ValueError::OutOfRange("lambda1"));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return Err(ValueError::OutOfRange("lambda2"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ValueError::OutOfRange("theta"));
        }
        if !(self.t_prior.is_finite() && self.t_prior > 0.0) {
            return Err(ValueError::OutOfRange("t_prior"));
        }
        if !(self.column_start.is_finite() && self.column_start >= 0.0) {
            return Err(ValueError::OutOfRange("column_start"));
        }
        Ok(())
    }
}

/// Instruction-match score per semantic label: 1 for the goal token (the
/// last instruction token), 0.5 for other instruction tokens, else 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    landmark: Vec<f64>,
}

impl Alignment {
    pub fn new(scene: &Scene, instruction: &[String]) -> Self {
        let mut landmark = vec![0.0; scene.landmarks.len()];
        for (i, tok) in instruction.iter().enumerate() {
            if let Some(idx) = scene.landmark_index(tok) {
                let s = if i + 1 == instruction.len() { 1.0 } else { 0.5 };
                landmark[idx] = f64::max(landmark[idx], s);
            }
        }
        Self { landmark }
    }

    pub fn score(&self, s: Semantic) -> f64 {
        match s {
            Semantic::Landmark(i) => self.landmark.get(i as usize).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn is_goal(&self, s: Semantic) -> bool {
        self.score(s) >= 1.0
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-ray confidence in `[0, 1]`: logistic of the weighted cue sum, shifted
/// so the least confident ray is 0.
pub fn frame_confidence(frame: &ImaginedFrame, align: &Alignment, w: &CueWeights, d_max: f64) -> Vec<f64> {
    let raw: Vec<f64> = frame
        .depth
        .iter()
        .zip(&frame.semantic)
        .zip(&frame.per_ray_sigma)
        .map(|((&d, &s), &sig)| {
            let a = align.score(s);
            let trav = (d / d_max).min(1.0);
            let occ = if d < w.d_near { 1.0 } else { 0.0 };
            let obs = -(sig / SIGMA_CEILING).min(1.0) - occ;
            logistic((w.w_align * a + w.w_trav * trav + w.w_obs * obs) / w.t_frame)
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    raw.into_iter().map(|c| (c - lo).clamp(0.0, 1.0)).collect()
}

/// Column layout of [`splat_rays`]: `None` deposits at ray endpoints only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub start: f64,
}

impl Column {
    pub fn from_params(f: &FusionParams) -> Option<Self> {
        f.column_projection.then_some(Self { start: f.column_start })
    }
}

/// Points a ray deposits into: every cell length along the ray from
/// `column.start` on, then the endpoint, or only the endpoint.
fn ray_samples(depth: f64, cell: f64, column: Option<Column>) -> impl Iterator<Item = f64> {
    let (first, n) = match column {
        Some(c) => (
            ((c.start / cell).ceil() as usize).max(1),
            ((depth / cell).ceil() as usize).saturating_sub(1),
        ),
        None => (1, 0),
    };
    (first..=n).map(move |k| k as f64 * cell).chain(std::iter::once(depth))
}

/// Splats per-ray `weights` from a sensor at egocentric pose `apex`.
/// In [`Accumulate::Add`] mode each ray's weight is split evenly over its
/// samples so the deposited mass per ray is at most its weight.
pub fn splat_rays(
    grid: &mut EgoGrid,
    apex: &Pose,
    depth: &[f64],
    weights: &[f64],
    sensor: &SensorConfig,
    column: Option<Column>,
    mode: Accumulate,
) {
    let o = apex.position();
    for (r, (&d, &w)) in depth.iter().zip(weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        let dir = Vec2::from_angle(apex.theta + sensor.ray_offset(r));
        let per = match mode {
            Accumulate::Max => w,
            Accumulate::Add => w / ray_samples(d, grid.cell, column).count() as f64,
        };
        for s in ray_samples(d, grid.cell, column) {
            grid.splat_point(o + dir * s, per, mode);
        }
    }
}

/// Splats one imagined frame into a fresh grid around `agent` (odometry
/// frame) and smooths it.
pub fn splat_frame(
    template: &EgoGrid,
    frame: &ImaginedFrame,
    confidence: &[f64],
    agent: &Pose,
    sensor: &SensorConfig,
    column: Option<Column>,
) -> EgoGrid {
    let mut g = template.blank_like();
    let apex = agent.relative(&frame.pose);
    g.add_wedge(&apex, sensor.fov, sensor.d_max);
    splat_rays(&mut g, &apex, &frame.depth, confidence, sensor, column, Accumulate::Max);
    g.smooth();
    g
}

/// Ungated `V_img` for one rollout.
pub fn imagination_value(
    rollout: &Rollout,
    agent: &Pose,
    align: &Alignment,
    sensor: &SensorConfig,
    cues: &CueWeights,
    fusion: &FusionParams,
    template: &EgoGrid,
) -> EgoGrid {
    if rollout.frames.is_empty() {
        return template.blank_like();
    }
    let grids: Vec<(usize, EgoGrid)> = rollout
        .frames
        .iter()
        .map(|f| {
            let conf = frame_confidence(f, align, cues, sensor.d_max);
            (f.tau, splat_frame(template, f, &conf, agent, sensor, Column::from_params(fusion)))
        })
        .collect();
    aggregate(&grids, fusion.gamma, fusion.beta)
}

/// Softmax over rays of the instruction-match score, temperature `t_prior`.
pub fn prior_weights(obs: &Observation, align: &Alignment, t_prior: f64) -> Vec<f64> {
    let s: Vec<f64> = obs.semantic.iter().map(|&l| align.score(l)).collect();
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|&x| ((x - m) / t_prior).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `V_prior` from the live observation, egocentric at `obs.odom`.
pub fn prior_map(
    obs: &Observation,
    align: &Alignment,
    template: &EgoGrid,
    sensor: &SensorConfig,
    t_prior: f64,
    column: Option<Column>,
) -> EgoGrid {
    let w = prior_weights(obs, align, t_prior);
    let mut g = template.blank_like();
    let apex = Pose::new(0.0, 0.0, 0.0);
    g.add_wedge(&apex, sensor.fov, sensor.d_max);
    splat_rays(&mut g, &apex, &obs.depth, &w, sensor, column, Accumulate::Add);
    g.smooth();
    g.clamp_unit();
    g
}

/// `sum_tau gamma^tau * V(pose_tau)` with poses in the odometry frame.
pub fn sample_path(grid: &EgoGrid, agent: &Pose, poses: &[Pose], gamma: f64) -> f64 {
    let mut disc = 1.0;
    let mut total = 0.0;
    for p in poses {
        disc *= gamma;
        total += disc * grid.sample(agent.inverse_transform_point(p.position()));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Landmark;

    fn scene() -> Scene {
        let mut s = Scene::empty(20.0, 20.0);
        for (i, l) in ["chair", "tv"].iter().enumerate() {
            s.landmarks.push(Landmark {
                label: l.to_string(),
                position: Vec2::new(5.0 + i as f64, 5.0),
                radius: 0.3,
            });
        }
        s
    }

    fn frame(n: usize) -> ImaginedFrame {
        ImaginedFrame {
            depth: vec![12.0; n],
            semantic: vec![Semantic::None; n],
            pose: Pose::new(0.0, 0.0, 0.0),
            per_ray_sigma: vec![0.0; n],
            tau: 1,
        }
    }

    fn align() -> Alignment {
        Alignment::new(&scene(), &["chair".into(), "tv".into()])
    }

    #[test]
    fn alignment_scores() {
        let a = align();
        assert_eq!(a.score(Semantic::Landmark(1)), 1.0);
        assert_eq!(a.score(Semantic::Landmark(0)), 0.5);
        assert_eq!(a.score(Semantic::Wall), 0.0);
        assert_eq!(a.score(Semantic::Landmark(9)), 0.0);
    }

    #[test]
    fn confidence_flat_for_constant_input() {
        let c = frame_confidence(&frame(16), &align(), &CueWeights::default(), 12.0);
        assert!(c.iter().all(|&v| v == c[0]));
    }

    #[test]
    fn goal_ray_is_strict_max() {
        let mut f = frame(16);
        f.semantic[5] = Semantic::Landmark(1);
        f.depth[5] = 4.0;
        let c = frame_confidence(&f, &align(), &CueWeights::default(), 12.0);
        for (i, &v) in c.iter().enumerate() {
            if i != 5 {
                assert!(v < c[5]);
            }
        }
    }

    #[test]
    fn confidence_monotone_in_sigma() {
        let mut prev = f64::INFINITY;
        for k in 0..12 {
            let mut f = frame(8);
            f.depth[0] = 6.0;
            f.depth[3] = 7.0;
            f.per_ray_sigma[3] = 0.05 * 2f64.powi(k);
            let c = frame_confidence(&f, &align(), &CueWeights::default(), 12.0);
            // the shift subtracts the minimum, compare against an untouched ray
            let rel = c[3] - c[0];
            assert!(rel <= prev + 1e-15);
            prev = rel;
        }
    }

    #[test]
    fn negative_weights_rejected() {
        assert!(CueWeights::new(-1.0, 0.5, 0.5, 1.0).is_err());
        assert!(CueWeights::new(1.0, 0.5, 0.5, 0.0).is_err());
        assert!(CueWeights::new(1.0, 0.0, 0.0, 2.0).is_ok());
    }

    #[test]
    fn softmax_example() {
        let obs = Observation {
            depth: vec![5.0; 4],
            semantic: vec![Semantic::Landmark(1), Semantic::None, Semantic::None, Semantic::None],
            pose_gt: Pose::default(),
            odom: Pose::default(),
        };
        let w = prior_weights(&obs, &align(), 1.0);
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 3.0)).abs() < 1e-12);
        assert!((w[0] - 0.475).abs() < 1e-3);
    }

    #[test]
    fn prior_flat_without_instruction_tokens() {
        let sensor = SensorConfig::default();
        let obs = Observation {
            depth: vec![4.0; sensor.rays],
            semantic: vec![Semantic::Wall; sensor.rays],
            pose_gt: Pose::default(),
            odom: Pose::default(),
        };
        let w = prior_weights(&obs, &align(), 0.1);
        assert!(w.iter().all(|&x| (x - 1.0 / 128.0).abs() < 1e-15));
        let g = prior_map(&obs, &align(), &EgoGrid::default(), &sensor, 0.1, Some(Column { start: 0.5 }));
        assert!(g.max() < 0.01, "{}", g.max());
        // dilation can at most spread each deposit over nine cells
        assert!(g.sum() <= 9.0 + 1e-9);
    }

    #[test]
    fn prior_sharp_limit() {
        let sensor = SensorConfig {
            rays: 9,
            ..SensorConfig::default()
        };
        let mut semantic = vec![Semantic::Wall; 9];
        semantic[4] = Semantic::Landmark(1);
        let obs = Observation {
            depth: vec![3.0; 9],
            semantic,
            pose_gt: Pose::default(),
            odom: Pose::default(),
        };
        let w = prior_weights(&obs, &align(), 1e-3);
        assert!((w[4] - 1.0).abs() < 1e-12);
        let mut g = EgoGrid::default();
        g.mask_all();
        splat_rays(&mut g, &Pose::default(), &obs.depth, &w, &sensor, None, Accumulate::Add);
        // the goal ray endpoint (3, 0) is a cell center: 3 / 0.15 = 20
        assert!((g.get(60, 40) - 1.0).abs() < 1e-9);
        assert!((g.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn column_skips_the_sensor_footprint() {
        let sensor = SensorConfig {
            rays: 1,
            ..SensorConfig::default()
        };
        let mut g = EgoGrid::default();
        g.mask_all();
        splat_rays(&mut g, &Pose::default(), &[3.0], &[0.7], &sensor, Some(Column { start: 0.5 }), Accumulate::Max);
        // cells 0.15 .. 0.45 m ahead stay empty, 0.6 .. 3.0 m are filled
        for k in 0..=3 {
            assert_eq!(g.get(40 + k, 40), 0.0, "{k}");
        }
        for k in 4..=20 {
            assert!((g.get(40 + k, 40) - 0.7).abs() < 1e-12, "{k}");
        }
        let mut h = EgoGrid::default();
        h.mask_all();
        splat_rays(&mut h, &Pose::default(), &[3.0], &[0.7], &sensor, Some(Column { start: 0.0 }), Accumulate::Max);
        assert_eq!(h.get(41, 40), 0.7);
        // a ray shorter than the start deposits only its endpoint
        let mut e = EgoGrid::default();
        e.mask_all();
        splat_rays(&mut e, &Pose::default(), &[0.3], &[1.0], &sensor, Some(Column { start: 0.5 }), Accumulate::Add);
        assert!((e.get(42, 40) - 1.0).abs() < 1e-9);
        assert!((e.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sample_path_examples() {
        let mut g = EgoGrid::default();
        let agent = Pose::new(2.0, 1.0, 0.3);
        let poses: Vec<Pose> = (1..=4).map(|i| agent.compose(&Pose::new(0.5 * i as f64, 0.0, 0.0))).collect();
        assert_eq!(sample_path(&g, &agent, &poses, 0.9), 0.0);
        g.mask_all();
        for y in 0..g.side {
            for x in 0..g.side {
                g.set(x, y, 1.0);
            }
        }
        assert!((sample_path(&g, &agent, &poses, 1.0) - 4.0).abs() < 1e-12);
        assert!((sample_path(&g, &agent, &poses, 0.9) - 3.0951).abs() < 1e-12);
        let far = vec![agent.compose(&Pose::new(30.0, 0.0, 0.0))];
        assert_eq!(sample_path(&g, &agent, &far, 1.0), 0.0);
    }

    #[test]
    fn imagination_value_peaks_along_goal_ray() {
        let sensor = SensorConfig::default();
        let mut f = frame(sensor.rays);
        f.depth = vec![2.0; sensor.rays];
        f.semantic = vec![Semantic::Wall; sensor.rays];
        f.semantic[64] = Semantic::Landmark(1);
        f.depth[64] = 5.0;
        let rollout = Rollout {
            frames: vec![f],
            sigma_a: 0.0,
            raw_uncertainty: 0.0,
        };
        let v = imagination_value(
            &rollout,
            &Pose::default(),
            &align(),
            &sensor,
            &CueWeights::default(),
            &FusionParams {
                gamma: 1.0,
                ..FusionParams::default()
            },
            &EgoGrid::default(),
        );
        let on = v.sample(Vec2::new(3.0, 0.0));
        let off = v.sample(Vec2::new(1.5, 1.0));
        assert!(on > off, "{on} {off}");
        assert!(v.values().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}
