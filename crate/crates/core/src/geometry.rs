//! Planar poses, the egocentric action space and its feasibility limits.
//!
//! Actions are expressed in the robot's local frame: `(dx, dy)` is a planar
//! displacement taken in the frame *before* the step, after which the yaw
//! change `dtheta` is applied.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numerical slack used when checking feasibility inequalities.
const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("empty action sequence")]
    EmptyActions,
    #[error("action {index} follows a STOP primitive")]
    ActionAfterStop { index: usize },
    #[error("action {index} violates platform limits")]
    Infeasible { index: usize },
    #[error("non-finite value in action {index}")]
    NonFinite { index: usize },
    #[error("path must contain at least 2 poses, got {0}")]
    PathTooShort(usize),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Agent state on the plane. `theta` is kept wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        let d = p - self.position();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    /// Composition `self ⊕ rel`.
    pub fn compose(&self, rel: &Pose) -> Pose {
        let p = self.transform_point(rel.position());
        Pose::new(p.x, p.y, self.theta + rel.theta)
    }

    /// The pose of `other` expressed in this pose's frame (`self⁻¹ ⊕ other`).
    pub fn relative(&self, other: &Pose) -> Pose {
        let p = self.inverse_transform_point(other.position());
        Pose::new(p.x, p.y, other.theta - self.theta)
    }

    /// Applies one action: translate in the pre-step frame, then rotate.
    pub fn apply(&self, a: &Action) -> Pose {
        if a.is_stop {
            return *self;
        }
        let p = self.transform_point(Vec2::new(a.dx, a.dy));
        Pose::new(p.x, p.y, self.theta + a.dtheta)
    }
}

/// One control step. `kappa` scales the step duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub kappa: f64,
    #[serde(default)]
    pub is_stop: bool,
}

impl Action {
    pub const fn new(dx: f64, dy: f64, dtheta: f64, kappa: f64) -> Self {
        Self {
            dx,
            dy,
            dtheta,
            kappa,
            is_stop: false,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    pub const fn stop() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            dtheta: 0.0,
            kappa: 0.0,
            is_stop: true,
        }
    }

    pub fn translation(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite() && self.kappa.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformLimits {
    pub v_max: f64,
    pub omega_max: f64,
    pub dt_ctrl: f64,
}

impl Default for PlatformLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: PI / 2.0,
            dt_ctrl: 1.0,
        }
    }
}

impl PlatformLimits {
    pub fn is_valid(&self) -> bool {
        self.v_max > 0.0 && self.omega_max > 0.0 && self.dt_ctrl > 0.0
    }

    /// Largest translation allowed for duration scale `kappa`.
    pub fn max_translation(&self, kappa: f64) -> f64 {
        self.v_max * kappa * self.dt_ctrl
    }

    pub fn max_rotation(&self, kappa: f64) -> f64 {
        self.omega_max * kappa * self.dt_ctrl
    }

    pub fn is_feasible(&self, a: &Action) -> bool {
        if a.is_stop {
            return a.dx == 0.0 && a.dy == 0.0 && a.dtheta == 0.0 && a.kappa == 0.0;
        }
        a.is_finite()
            && a.kappa > 0.0
            && a.translation() <= self.max_translation(a.kappa) + FEASIBILITY_EPS
            && a.dtheta.abs() <= self.max_rotation(a.kappa) + FEASIBILITY_EPS
    }

    /// Scales translation and rotation independently into the feasible set.
    pub fn clamp(&self, a: &Action) -> Action {
        if a.is_stop {
            return *a;
        }
        let mut out = *a;
        let t = a.translation();
        let t_max = self.max_translation(a.kappa);
        if t > t_max {
            let s = t_max / t;
            out.dx *= s;
            out.dy *= s;
        }
        let r_max = self.max_rotation(a.kappa);
        out.dtheta = a.dtheta.clamp(-r_max, r_max);
        out
    }
}

/// Integrates an action sequence from `start`, returning one pose per action.
pub fn integrate_poses(
    start: &Pose,
    actions: &[Action],
    limits: &PlatformLimits,
) -> Result<Vec<Pose>, GeometryError> {
    if actions.is_empty() {
        return Err(GeometryError::EmptyActions);
    }
    let mut out = Vec::with_capacity(actions.len());
    let mut pose = *start;
    let mut stopped = false;
    for (index, a) in actions.iter().enumerate() {
        if stopped {
            return Err(GeometryError::ActionAfterStop { index });
        }
        if !a.is_finite() {
            return Err(GeometryError::NonFinite { index });
        }
        if !limits.is_feasible(a) {
            return Err(GeometryError::Infeasible { index });
        }
        stopped = a.is_stop;
        pose = pose.apply(a);
        out.push(pose);
    }
    Ok(out)
}

/// Result of [`resample_to_horizon`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub actions: Vec<Action>,
    /// Set when the input path had zero arc length.
    pub degenerate: bool,
}

/// Pose at arc length `s` along a polyline of poses. Positions are linearly
/// interpolated; headings follow the shortest angular difference.
fn pose_at_arc_length(path: &[Pose], cumulative: &[f64], s: f64) -> Pose {
    let last = path.len() - 1;
    if s >= cumulative[last] {
        return path[last];
    }
    // First segment whose end lies at or beyond `s`.
    let seg = cumulative.partition_point(|&c| c < s).max(1) - 1;
    let (a, b) = (path[seg], path[seg + 1]);
    let len = cumulative[seg + 1] - cumulative[seg];
    let t = if len > 0.0 {
        (s - cumulative[seg]) / len
    } else {
        0.0
    };
    let dtheta = wrap_angle(b.theta - a.theta);
    Pose::new(
        a.x + (b.x - a.x) * t,
        a.y + (b.y - a.y) * t,
        a.theta + dtheta * t,
    )
}

/// Converts a pose path into `horizon` actions that visit arc-length-uniform
/// samples of the path (endpoint inclusive).
///
/// Each action is the relative motion from the pose actually reached to the
/// next sample, clamped to the platform limits. Motion cut off by a clamp is
/// therefore carried into the following step's target; whatever remains after
/// the last step is dropped.
pub fn resample_to_horizon(
    path: &[Pose],
    horizon: usize,
    limits: &PlatformLimits,
) -> Result<Resampled, GeometryError> {
    if path.len() < 2 {
        return Err(GeometryError::PathTooShort(path.len()));
    }
    if horizon == 0 {
        return Err(GeometryError::ZeroHorizon);
    }
    let mut cumulative = Vec::with_capacity(path.len());
    cumulative.push(0.0);
    for w in path.windows(2) {
        let prev = *cumulative.last().unwrap();
        cumulative.push(prev + w[0].position().distance(w[1].position()));
    }
    let total = *cumulative.last().unwrap();
    if total <= 1e-12 {
        return Ok(Resampled {
            actions: vec![Action::zero(); horizon],
            degenerate: true,
        });
    }

    let mut actions = Vec::with_capacity(horizon);
    let mut current = path[0];
    for k in 1..=horizon {
        let s = total * k as f64 / horizon as f64;
        let target = pose_at_arc_length(path, &cumulative, s);
        let rel = current.relative(&target);
        let raw = Action::new(rel.x, rel.y, rel.theta, 1.0);
        let a = limits.clamp(&raw);
        current = current.apply(&a);
        actions.push(a);
    }
    Ok(Resampled {
        actions,
        degenerate: false,
    })
}

/// z-score scales for the action embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionScales {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_kappa: f64,
}

impl Default for ActionScales {
    fn default() -> Self {
        Self {
            sigma_x: 1.0,
            sigma_y: 1.0,
            sigma_kappa: 1.0,
        }
    }
}

impl ActionScales {
    pub const FLOOR: f64 = 1e-3;

    /// Population standard deviation of each component over a reference
    /// corpus, floored at [`Self::FLOOR`]. STOP primitives are skipped.
    pub fn from_corpus<'a>(actions: impl IntoIterator<Item = &'a Action>) -> Self {
        let moves: Vec<&Action> = actions.into_iter().filter(|a| !a.is_stop).collect();
        let std = |f: &dyn Fn(&Action) -> f64| -> f64 {
            if moves.is_empty() {
                return Self::FLOOR;
            }
            let n = moves.len() as f64;
            let mean = moves.iter().map(|a| f(a)).sum::<f64>() / n;
            let var = moves.iter().map(|a| (f(a) - mean).powi(2)).sum::<f64>() / n;
            var.sqrt().max(Self::FLOOR)
        };
        Self {
            sigma_x: std(&|a| a.dx),
            sigma_y: std(&|a| a.dy),
            sigma_kappa: std(&|a| a.kappa),
        }
    }

    fn is_valid(&self) -> bool {
        self.sigma_x > 0.0 && self.sigma_y > 0.0 && self.sigma_kappa > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub scales: ActionScales,
    pub horizon: usize,
    /// rad per meter; a step is a "turn" when `|dtheta| > translation * ratio`.
    pub mode_ratio: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            scales: ActionScales::default(),
            horizon: 4,
            mode_ratio: 0.5,
        }
    }
}

/// Number of sinusoidal time-code dimensions.
pub const TIME_CODE_DIM: usize = 8;
/// Full embedding length: 5 motion features, time code, mode bit.
pub const EMBEDDING_DIM: usize = 5 + TIME_CODE_DIM + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionEmbedding(pub [f64; EMBEDDING_DIM]);

impl ActionEmbedding {
    pub fn motion(&self) -> &[f64] {
        &self.0[..5]
    }

    pub fn time_code(&self) -> &[f64] {
        &self.0[5..5 + TIME_CODE_DIM]
    }

    pub fn mode_bit(&self) -> f64 {
        self.0[EMBEDDING_DIM - 1]
    }
}

/// Embeds one step of a candidate sequence.
///
/// # Panics
/// If any scale is not strictly positive.
pub fn embed_action(a: &Action, step_index: usize, cfg: &EmbeddingConfig) -> ActionEmbedding {
    assert!(cfg.scales.is_valid(), "action scales must be positive");
    let mut v = [0.0; EMBEDDING_DIM];
    let (s, c) = a.dtheta.sin_cos();
    v[0] = a.dx / cfg.scales.sigma_x;
    v[1] = a.dy / cfg.scales.sigma_y;
    v[2] = s;
    v[3] = c;
    v[4] = a.kappa / cfg.scales.sigma_kappa;

    let t = step_index as f64 / cfg.horizon.max(1) as f64;
    for k in 0..TIME_CODE_DIM / 2 {
        let w = f64::from(1u32 << k) * PI * t;
        v[5 + 2 * k] = w.sin();
        v[5 + 2 * k + 1] = w.cos();
    }
    let turning = a.dtheta.abs() > a.translation() * cfg.mode_ratio;
    v[EMBEDDING_DIM - 1] = if turning { 1.0 } else { 0.0 };
    ActionEmbedding(v)
}
