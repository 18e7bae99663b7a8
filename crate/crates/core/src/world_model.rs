//! Action-conditioned rollouts: `(context, instruction, C(A)) -> imagined
//! frames`.
//!
//! Two models implement the contract. [`OracleWorldModel`] renders the true
//! scene at each imagined pose. [`NoisyOracle`] corrupts that rendering with
//! horizon-growing depth jitter, label dropout and instruction-conditioned
//! hallucinated openings, and estimates its own uncertainty from an ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::scene::{cast_ray, Observation, Scene, Semantic, SensorConfig};

/// Depth std (meters) at which per-ray uncertainty saturates.
pub const SIGMA_CEILING: f64 = 1.0;

/// Probability that an ensemble member reproduces a rollout-level
/// hallucination.
const PHANTOM_ADOPTION: f64 = 0.75;
const GHOST_RADIUS: f64 = 0.4;
/// Distance band, meters, where a ghost landmark is placed.
const GHOST_RANGE: (f64, f64) = (2.0, 6.0);

#[derive(Debug, Error, PartialEq)]
pub enum WorldModelError {
    #[error("calibration suite is empty")]
    EmptySuite,
    #[error("rollout request has no context observation")]
    NoContext,
    #[error("rollout request has no poses")]
    NoPoses,
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutRequest<'a> {
    /// Most recent observations, oldest first. The last one anchors the
    /// odometry frame of `poses`.
    pub context: &'a [Observation],
    pub instruction: &'a [String],
    /// `C(A)`: one pose per action, in the odometry frame.
    pub poses: &'a [Pose],
    pub decode_stride: usize,
}

impl RolloutRequest<'_> {
    pub fn validate(&self) -> Result<(), WorldModelError> {
        if self.context.is_empty() {
            return Err(WorldModelError::NoContext);
        }
        if self.poses.is_empty() {
            return Err(WorldModelError::NoPoses);
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.poses.len()
    }

    /// Decoded steps `{1, 1 + dt, ...} <= H`.
    pub fn decode_set(&self) -> impl Iterator<Item = usize> {
        (1..=self.poses.len()).step_by(self.decode_stride.max(1))
    }

    /// Maps an odometry-frame pose into the world using the anchor
    /// observation. Only oracles may use this.
    fn world_pose(&self, pose: &Pose) -> Pose {
        let anchor = self.context.last().expect("validated");
        anchor.pose_gt.compose(&anchor.odom.relative(pose))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginedFrame {
    pub depth: Vec<f64>,
    pub semantic: Vec<Semantic>,
    /// Imagined pose, odometry frame.
    pub pose: Pose,
    pub per_ray_sigma: Vec<f64>,
    pub tau: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub frames: Vec<ImaginedFrame>,
    /// Rollout uncertainty in `[0, 1]` (a percentile once calibrated).
    pub sigma_a: f64,
    /// Mean normalized per-ray depth std before calibration.
    pub raw_uncertainty: f64,
}

pub trait WorldModel: Sync {
    fn rollout(&self, req: &RolloutRequest<'_>, seed: u64) -> Rollout;

    /// Serializable description sufficient to rebuild the model for a scene.
    fn spec(&self) -> ModelSpec {
        ModelSpec::Custom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Oracle,
    Noisy {
        noise: NoiseConfig,
        calibration: Option<CalibrationTable>,
    },
    Custom,
}

fn render(scene: &Scene, sensor: &SensorConfig, pose: &Pose) -> Option<(Vec<f64>, Vec<Semantic>)> {
    if !scene.contains(pose.position()) {
        return None;
    }
    let mut depth = Vec::with_capacity(sensor.rays);
    let mut semantic = Vec::with_capacity(sensor.rays);
    for r in 0..sensor.rays {
        let dir = crate::geometry::Vec2::from_angle(pose.theta + sensor.ray_offset(r));
        let hit = cast_ray(scene, pose.position(), dir, sensor.d_max);
        depth.push(hit.depth);
        semantic.push(hit.semantic);
    }
    Some((depth, semantic))
}

fn blank_frame(sensor: &SensorConfig, pose: Pose, tau: usize) -> ImaginedFrame {
    ImaginedFrame {
        depth: vec![sensor.d_max; sensor.rays],
        semantic: vec![Semantic::None; sensor.rays],
        pose,
        per_ray_sigma: vec![SIGMA_CEILING; sensor.rays],
        tau,
    }
}

/// Mean normalized per-ray uncertainty over all frames.
fn mean_uncertainty(frames: &[ImaginedFrame]) -> f64 {
    let (sum, n) = frames
        .iter()
        .flat_map(|f| f.per_ray_sigma.iter())
        .fold((0.0, 0usize), |(s, n), &v| (s + (v / SIGMA_CEILING).min(1.0), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Renders ground truth at every imagined pose. Instruction-agnostic.
pub struct OracleWorldModel<'a> {
    pub scene: &'a Scene,
    pub sensor: SensorConfig,
}

impl<'a> OracleWorldModel<'a> {
    pub fn new(scene: &'a Scene, sensor: SensorConfig) -> Self {
        Self { scene, sensor }
    }
}

impl WorldModel for OracleWorldModel<'_> {
    fn rollout(&self, req: &RolloutRequest<'_>, _seed: u64) -> Rollout {
        oracle_rollout(self.scene, &self.sensor, req)
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec::Oracle
    }
}

pub fn oracle_rollout(scene: &Scene, sensor: &SensorConfig, req: &RolloutRequest<'_>) -> Rollout {
    if req.validate().is_err() {
        return Rollout {
            frames: Vec::new(),
            sigma_a: 0.0,
            raw_uncertainty: 0.0,
        };
    }
    let frames: Vec<ImaginedFrame> = req
        .decode_set()
        .map(|tau| {
            let pose = req.poses[tau - 1];
            match render(scene, sensor, &req.world_pose(&pose)) {
                Some((depth, semantic)) => ImaginedFrame {
                    per_ray_sigma: vec![0.0; depth.len()],
                    depth,
                    semantic,
                    pose,
                    tau,
                },
                None => blank_frame(sensor, pose, tau),
            }
        })
        .collect();
    let raw = mean_uncertainty(&frames);
    Rollout {
        frames,
        sigma_a: raw.clamp(0.0, 1.0),
        raw_uncertainty: raw,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Base depth jitter std, meters.
    pub sigma_d: f64,
    /// Per-ray probability of dropping the semantic label.
    pub p_drop: f64,
    /// Per-ray probability of a hallucinated opening.
    pub p_hall: f64,
    pub ensemble_size: usize,
    /// Grow jitter with the step index: `sigma_d * (1 + tau / H)`.
    pub drift: bool,
    /// Half-width of the severity multiplier, drawn uniformly from
    /// `[1 - spread, 1 + spread]`.
    pub severity_spread: f64,
    pub severity_scope: SeverityScope,
    /// Probability, scaled by severity, that the rollout imagines the goal
    /// landmark somewhere ahead of the agent.
    pub p_ghost: f64,
}

/// What a severity draw is tied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityScope {
    /// Keyed by the context observations: every rollout imagined from the
    /// same context shares it.
    #[default]
    Context,
    /// Independent per rollout.
    Rollout,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_d: 0.3,
            p_drop: 0.1,
            p_hall: 0.01,
            ensemble_size: 8,
            drift: true,
            severity_spread: 1.0,
            severity_scope: SeverityScope::Context,
            p_ghost: 0.0,
        }
    }
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        sigma_d: 0.0,
        p_drop: 0.0,
        p_hall: 0.0,
        ensemble_size: 1,
        drift: false,
        severity_spread: 0.0,
        severity_scope: SeverityScope::Context,
        p_ghost: 0.0,
    };
}

/// Empirical CDF of raw rollout uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    sorted: Vec<f64>,
    pub degenerate: bool,
}

impl CalibrationTable {
    pub fn from_values(mut values: Vec<f64>) -> Result<Self, WorldModelError> {
        if values.is_empty() {
            return Err(WorldModelError::EmptySuite);
        }
        values.sort_by(f64::total_cmp);
        let degenerate = values.first() == values.last();
        Ok(Self {
            sorted: values,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Pools several tables into one.
    pub fn merge(tables: &[CalibrationTable]) -> Result<Self, WorldModelError> {
        Self::from_values(tables.iter().flat_map(|t| t.sorted.iter().copied()).collect())
    }

    /// Fraction of calibration values `<= raw`. A degenerate table maps
    /// everything to 0.5.
    pub fn percentile(&self, raw: f64) -> f64 {
        if self.degenerate {
            return 0.5;
        }
        let below = self.sorted.partition_point(|&v| v <= raw);
        below as f64 / self.sorted.len() as f64
    }
}

/// Builds the percentile table from rollouts of `model` over `suite`.
pub fn calibrate_sigma<M: WorldModel + ?Sized>(
    model: &M,
    suite: &[(RolloutRequest<'_>, u64)],
) -> Result<CalibrationTable, WorldModelError> {
    if suite.is_empty() {
        return Err(WorldModelError::EmptySuite);
    }
    let raw = suite.iter().map(|(req, seed)| model.rollout(req, *seed).raw_uncertainty).collect();
    CalibrationTable::from_values(raw)
}

/// Rebuilds a model from its description. `Custom` has no rebuild.
pub fn build_model<'a>(spec: &ModelSpec, scene: &'a Scene, sensor: SensorConfig) -> Option<Box<dyn WorldModel + 'a>> {
    match spec {
        ModelSpec::Oracle => Some(Box::new(OracleWorldModel::new(scene, sensor))),
        ModelSpec::Noisy { noise, calibration } => Some(Box::new(NoisyOracle {
            scene,
            sensor,
            noise: *noise,
            calibration: calibration.clone(),
        })),
        ModelSpec::Custom => None,
    }
}

/// Ground-truth rendering corrupted by a seeded ensemble.
pub struct NoisyOracle<'a> {
    pub scene: &'a Scene,
    pub sensor: SensorConfig,
    pub noise: NoiseConfig,
    pub calibration: Option<CalibrationTable>,
}

impl<'a> NoisyOracle<'a> {
    pub fn new(scene: &'a Scene, sensor: SensorConfig, noise: NoiseConfig) -> Self {
        Self {
            scene,
            sensor,
            noise,
            calibration: None,
        }
    }

    pub fn with_calibration(mut self, table: CalibrationTable) -> Self {
        self.calibration = Some(table);
        self
    }

    fn calibrated(&self, raw: f64) -> f64 {
        if raw <= 0.0 {
            return 0.0;
        }
        match &self.calibration {
            Some(t) => t.percentile(raw),
            None => raw.clamp(0.0, 1.0),
        }
    }
}

impl WorldModel for NoisyOracle<'_> {
    fn rollout(&self, req: &RolloutRequest<'_>, seed: u64) -> Rollout {
        noisy_oracle_rollout(self, req, seed)
    }

    fn spec(&self) -> ModelSpec {
        ModelSpec::Noisy {
            noise: self.noise,
            calibration: self.calibration.clone(),
        }
    }
}

fn majority(labels: &[Semantic]) -> Semantic {
    // Ties resolve to the label seen first; member 0 is listed first.
    let mut best = labels[0];
    let mut best_count = 0;
    for (i, &l) in labels.iter().enumerate() {
        if labels[..i].contains(&l) {
            continue;
        }
        let count = labels.iter().filter(|&&m| m == l).count();
        if count > best_count {
            best = l;
            best_count = count;
        }
    }
    best
}

pub fn noisy_oracle_rollout(model: &NoisyOracle<'_>, req: &RolloutRequest<'_>, seed: u64) -> Rollout {
    let clean = oracle_rollout(model.scene, &model.sensor, req);
    let cfg = &model.noise;
    let e = cfg.ensemble_size.max(1);
    let d_max = model.sensor.d_max;
    let horizon = req.horizon().max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let spread = cfg.severity_spread.clamp(0.0, 1.0);
    let mut context_rng = ChaCha8Rng::seed_from_u64(context_key(req.context));
    let severity = match (spread > 0.0, cfg.severity_scope) {
        (false, _) => 1.0,
        (true, SeverityScope::Rollout) => rng.random_range(1.0 - spread..=1.0 + spread),
        (true, SeverityScope::Context) => context_rng.random_range(1.0 - spread..=1.0 + spread),
    };
    let p_hall = (cfg.p_hall * severity).clamp(0.0, 1.0);
    let p_drop = (cfg.p_drop * severity).clamp(0.0, 1.0);
    let p_ghost = (cfg.p_ghost * severity).clamp(0.0, 1.0);
    let ghost_rng = match cfg.severity_scope {
        SeverityScope::Rollout => &mut rng,
        SeverityScope::Context => &mut context_rng,
    };
    let ghost = (p_ghost > 0.0 && ghost_rng.random_bool(p_ghost))
        .then(|| {
            let goal = req.instruction.iter().rev().find_map(|t| model.scene.landmark_index(t))?;
            let anchor = req.context.last()?;
            let half = model.sensor.fov / 2.0;
            let bearing = anchor.pose_gt.theta + ghost_rng.random_range(-half..=half);
            let dist = ghost_rng.random_range(GHOST_RANGE.0..=GHOST_RANGE.1);
            let c = [
                anchor.pose_gt.x + dist * bearing.cos(),
                anchor.pose_gt.y + dist * bearing.sin(),
            ];
            Some((c, Semantic::Landmark(goal as u16)))
        })
        .flatten();
    let adopts: Vec<bool> = (0..e)
        .map(|_| ghost.is_some() && (e == 1 || rng.random_bool(PHANTOM_ADOPTION)))
        .collect();

    let mut frames = Vec::with_capacity(clean.frames.len());
    let mut member_depth = vec![0.0; e];
    let mut member_sem = vec![Semantic::None; e];
    for frame in clean.frames {
        let in_bounds = frame.per_ray_sigma.iter().all(|&s| s == 0.0);
        if !in_bounds {
            frames.push(frame);
            continue;
        }
        let drift = if cfg.drift { 1.0 + frame.tau as f64 / horizon } else { 1.0 };
        let sd = cfg.sigma_d * severity * drift;
        let jitter = (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite sigma"));

        let rays = frame.depth.len();
        let wp = req.world_pose(&frame.pose);
        let mut depth = Vec::with_capacity(rays);
        let mut semantic = Vec::with_capacity(rays);
        let mut sigma = Vec::with_capacity(rays);
        for r in 0..rays {
            let phantom = if p_hall > 0.0 && rng.random_bool(p_hall) {
                let d = (frame.depth[r] + rng.random_range(1.5..=4.0)).min(d_max);
                Some((d, Semantic::None))
            } else {
                None
            };
            let ghost_hit = ghost.and_then(|(c, label)| {
                let t = ray_circle(&wp, wp.theta + model.sensor.ray_offset(r), c, GHOST_RADIUS)?;
                (t < frame.depth[r]).then_some((t, label))
            });
            for m in 0..e {
                let (mut d, mut l) = (frame.depth[r], frame.semantic[r]);
                if let (true, Some((gd, gl))) = (adopts[m], ghost_hit) {
                    d = gd;
                    l = gl;
                }
                if let Some((pd, pl)) = phantom {
                    if e == 1 || rng.random_bool(PHANTOM_ADOPTION) {
                        d = pd;
                        l = pl;
                    }
                }
                if let Some(n) = &jitter {
                    d = (d + n.sample(&mut rng)).clamp(1e-6, d_max);
                }
                if p_drop > 0.0 && rng.random_bool(p_drop) {
                    l = Semantic::None;
                }
                member_depth[m] = d;
                member_sem[m] = l;
            }
            if member_depth.iter().all(|&d| d == member_depth[0]) {
                depth.push(member_depth[0]);
                sigma.push(0.0);
            } else {
                let mean = member_depth.iter().sum::<f64>() / e as f64;
                let var = member_depth.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / e as f64;
                depth.push(mean.clamp(1e-6, d_max));
                sigma.push(if e == 1 { 0.0 } else { var.sqrt() });
            }
            semantic.push(majority(&member_sem));
        }
        frames.push(ImaginedFrame {
            depth,
            semantic,
            pose: frame.pose,
            per_ray_sigma: sigma,
            tau: frame.tau,
        });
    }

    let raw = if e == 1 { 0.0 } else { mean_uncertainty(&frames) };
    Rollout {
        sigma_a: model.calibrated(raw),
        raw_uncertainty: raw,
        frames,
    }
}

/// Distance along a ray to a circle, if it hits in front of the origin.
fn ray_circle(origin: &Pose, heading: f64, c: [f64; 2], radius: f64) -> Option<f64> {
    let (dx, dy) = (c[0] - origin.x, c[1] - origin.y);
    let along = dx * heading.cos() + dy * heading.sin();
    let perp2 = dx * dx + dy * dy - along * along;
    let r2 = radius * radius;
    if along <= 0.0 || perp2 >= r2 {
        return None;
    }
    Some((along - (r2 - perp2).sqrt()).max(1e-6))
}

/// Deterministic per-(stream, step, candidate) seed derivation (SplitMix64).
/// Hash of the latest context observation.
pub fn context_key(context: &[Observation]) -> u64 {
    let Some(obs) = context.last() else {
        return 0;
    };
    let pose = [obs.odom.x, obs.odom.y, obs.odom.theta];
    pose.iter()
        .chain(&obs.depth)
        .fold(0x6E61_7666_7573_6521, |h, v| derive_seed(h, v.to_bits(), 1))
}

pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::scene::{sense, Landmark, Wall};

    fn fixture() -> (Scene, Observation) {
        let mut s = Scene::empty(12.0, 12.0);
        s.walls.push(Wall::new(Vec2::new(9.0, 1.0), Vec2::new(9.0, 11.0)));
        s.walls.push(Wall::new(Vec2::new(1.0, 9.0), Vec2::new(8.0, 9.0)));
        s.landmarks.push(Landmark {
            label: "tv".into(),
            position: Vec2::new(7.0, 5.0),
            radius: 0.3,
        });
        s.landmarks.push(Landmark {
            label: "sofa".into(),
            position: Vec2::new(4.0, 8.0),
            radius: 0.3,
        });
        let obs = sense(&s, &Pose::new(3.0, 5.0, 0.0), &SensorConfig::default()).unwrap();
        (s, obs)
    }

    fn poses() -> Vec<Pose> {
        (1..=4).map(|i| Pose::new(3.0 + 0.5 * i as f64, 5.0, 0.1 * i as f64)).collect()
    }

    fn instruction() -> Vec<String> {
        vec!["sofa".into(), "tv".into()]
    }

    #[test]
    fn oracle_matches_sensor() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = poses();
        let ins = instruction();
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let r = oracle_rollout(&s, &SensorConfig::default(), &req);
        assert_eq!(r.frames.len(), 4);
        assert_eq!(r.sigma_a, 0.0);
        for f in &r.frames {
            let truth = sense(&s, &p[f.tau - 1], &SensorConfig::default()).unwrap();
            assert_eq!(f.depth, truth.depth);
            assert_eq!(f.semantic, truth.semantic);
        }
        // instruction-agnostic
        let other = vec!["bed".to_string()];
        let req2 = RolloutRequest {
            instruction: &other,
            ..req
        };
        assert_eq!(oracle_rollout(&s, &SensorConfig::default(), &req2), r);
    }

    #[test]
    fn oracle_follows_odometry_offset() {
        let (s, mut obs) = fixture();
        // odometry believes we are 1 m further along x than we are
        obs.odom = Pose::new(4.0, 5.0, 0.0);
        let ctx = [obs];
        let p = vec![Pose::new(4.5, 5.0, 0.0)];
        let req = RolloutRequest {
            context: &ctx,
            instruction: &[],
            poses: &p,
            decode_stride: 1,
        };
        let r = oracle_rollout(&s, &SensorConfig::default(), &req);
        let truth = sense(&s, &Pose::new(3.5, 5.0, 0.0), &SensorConfig::default()).unwrap();
        assert_eq!(r.frames[0].depth, truth.depth);
        assert_eq!(r.frames[0].pose, p[0]);
    }

    #[test]
    fn decode_stride() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = poses();
        let req = RolloutRequest {
            context: &ctx,
            instruction: &[],
            poses: &p,
            decode_stride: 2,
        };
        let r = oracle_rollout(&s, &SensorConfig::default(), &req);
        assert_eq!(r.frames.iter().map(|f| f.tau).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn out_of_bounds_frame_is_blank() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = vec![Pose::new(-30.0, 5.0, 0.0)];
        let req = RolloutRequest {
            context: &ctx,
            instruction: &[],
            poses: &p,
            decode_stride: 1,
        };
        let r = oracle_rollout(&s, &SensorConfig::default(), &req);
        assert!(r.frames[0].depth.iter().all(|&d| d == 12.0));
        assert!(r.frames[0].per_ray_sigma.iter().all(|&v| v == SIGMA_CEILING));
    }

    #[test]
    fn zero_noise_equals_oracle() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = poses();
        let ins = instruction();
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let clean = oracle_rollout(&s, &SensorConfig::default(), &req);
        for e in [1, 3, 8] {
            let noise = NoiseConfig {
                ensemble_size: e,
                severity_spread: 0.5,
                ..NoiseConfig::NONE
            };
            let m = NoisyOracle::new(&s, SensorConfig::default(), noise);
            let r = m.rollout(&req, 42);
            assert_eq!(r.frames, clean.frames);
            assert_eq!(r.sigma_a, 0.0);
        }
    }

    #[test]
    fn single_member_has_zero_sigma() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = poses();
        let noise = NoiseConfig {
            ensemble_size: 1,
            ..NoiseConfig::default()
        };
        let m = NoisyOracle::new(&s, SensorConfig::default(), noise);
        let req = RolloutRequest {
            context: &ctx,
            instruction: &[],
            poses: &p,
            decode_stride: 1,
        };
        assert_eq!(m.rollout(&req, 9).sigma_a, 0.0);
    }

    #[test]
    fn noisy_rollout_is_reproducible() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let p = poses();
        let ins = instruction();
        let noise = NoiseConfig {
            sigma_d: 0.5,
            ensemble_size: 8,
            ..NoiseConfig::default()
        };
        let m = NoisyOracle::new(&s, SensorConfig::default(), noise);
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let a = m.rollout(&req, 1234);
        let b = m.rollout(&req, 1234);
        assert_eq!(a.sigma_a.to_bits(), b.sigma_a.to_bits());
        assert_eq!(a, b);
        assert!(a.sigma_a > 0.0 && a.sigma_a <= 1.0);
    }

    #[test]
    fn calibration_examples() {
        let t = CalibrationTable::from_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.percentile(2.5), 0.5);
        assert_eq!(t.percentile(0.5), 0.0);
        assert_eq!(t.percentile(4.0), 1.0);
        let d = CalibrationTable::from_values(vec![2.0; 5]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.percentile(100.0), 0.5);
        assert_eq!(CalibrationTable::from_values(vec![]), Err(WorldModelError::EmptySuite));
    }

    #[test]
    fn majority_vote() {
        use Semantic::*;
        assert_eq!(majority(&[Wall, None, Wall]), Wall);
        assert_eq!(majority(&[None, Wall]), None);
        assert_eq!(majority(&[Landmark(1), Landmark(1), Wall, Wall, Wall]), Wall);
    }

    fn jitter_only(sigma_d: f64) -> NoiseConfig {
        NoiseConfig {
            sigma_d,
            p_drop: 0.0,
            p_hall: 0.0,
            ensemble_size: 8,
            drift: true,
            severity_spread: 0.0,
            severity_scope: SeverityScope::Rollout,
            p_ghost: 0.0,
        }
    }

    #[test]
    fn sigma_a_increases_with_sigma_d() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let (p, ins) = (poses(), instruction());
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let mean_sigma = |sd: f64| {
            let m = NoisyOracle::new(&s, SensorConfig::default(), jitter_only(sd));
            (0..100).map(|seed| m.rollout(&req, seed).sigma_a).sum::<f64>() / 100.0
        };
        let levels: Vec<f64> = [0.1, 0.3, 0.5].iter().map(|&sd| mean_sigma(sd)).collect();
        assert!(levels[0] > 0.0);
        assert!(levels.windows(2).all(|w| w[1] > w[0]), "{levels:?}");
    }

    #[test]
    fn drift_grows_with_tau() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let (p, ins) = (poses(), instruction());
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let m = NoisyOracle::new(&s, SensorConfig::default(), jitter_only(0.2));
        let mut per_tau = [0.0; 4];
        for seed in 0..100 {
            for f in m.rollout(&req, seed).frames {
                per_tau[f.tau - 1] += f.per_ray_sigma.iter().sum::<f64>() / f.per_ray_sigma.len() as f64;
            }
        }
        assert!(per_tau[3] >= per_tau[0], "{per_tau:?}");
        assert!(per_tau.windows(2).all(|w| w[1] > w[0]), "{per_tau:?}");
    }

    #[test]
    fn context_severity_is_shared_across_candidates() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let ins = instruction();
        let left: Vec<Pose> = (1..=4).map(|i| Pose::new(3.0, 5.0 + 0.4 * i as f64, 1.5)).collect();
        let right = poses();
        let noise = NoiseConfig {
            p_hall: 0.0,
            p_drop: 0.0,
            severity_spread: 1.0,
            ..NoiseConfig::default()
        };
        let raw = |noise: NoiseConfig, p: &[Pose], seed: u64| {
            let m = NoisyOracle::new(&s, SensorConfig::default(), noise);
            let req = RolloutRequest {
                context: &ctx,
                instruction: &ins,
                poses: p,
                decode_stride: 1,
            };
            m.rollout(&req, seed).raw_uncertainty
        };
        let spread_of = |noise: NoiseConfig| {
            let v: Vec<f64> = (0..40).map(|k| raw(noise, if k % 2 == 0 { &left } else { &right }, k)).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt() / mean
        };
        let shared = spread_of(noise);
        let independent = spread_of(NoiseConfig {
            severity_scope: SeverityScope::Rollout,
            ..noise
        });
        assert!(shared < 0.5 * independent, "{shared} vs {independent}");
        assert_eq!(context_key(&ctx), context_key(&ctx.clone()));
        assert_eq!(context_key(&[]), 0);
    }

    #[test]
    fn ghost_goal_appears_ahead() {
        let (s, obs) = fixture();
        let ctx = [obs];
        let ins: Vec<String> = vec!["tv".into(), "sofa".into()];
        let p = poses();
        let req = RolloutRequest {
            context: &ctx,
            instruction: &ins,
            poses: &p,
            decode_stride: 1,
        };
        let sofa = |r: &Rollout| {
            r.frames
                .iter()
                .flat_map(|f| &f.semantic)
                .filter(|&&l| l == Semantic::Landmark(1))
                .count()
        };
        let clean = oracle_rollout(&s, &SensorConfig::default(), &req);
        let noise = NoiseConfig {
            p_ghost: 1.0,
            ..NoiseConfig::NONE
        };
        let r = NoisyOracle::new(&s, SensorConfig::default(), noise).rollout(&req, 5);
        assert_eq!(sofa(&clean), 0);
        assert!(sofa(&r) > 0);
        // same context, different candidate: the ghost stays put in the world
        let other: Vec<Pose> = (1..=4).map(|i| Pose::new(3.0 + 0.4 * i as f64, 5.0, -0.1 * i as f64)).collect();
        let r2 = NoisyOracle::new(&s, SensorConfig::default(), noise).rollout(&RolloutRequest { poses: &other, ..req }, 9);
        assert!(sofa(&r2) > 0);
    }
}
