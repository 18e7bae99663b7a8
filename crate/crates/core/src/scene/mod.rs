//! Procedural 2D indoor scenes, a raycast depth/semantic sensor and a
//! collision-checked motion model.

mod generate;
mod geodesic;
mod raycast;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Action, Pose, Vec2};

pub use generate::{generate_episode, generate_scene, EpisodeGenConfig, GeneratorConfig};
pub use geodesic::{segments_intersect, GeodesicField};
pub use raycast::{cast_ray, segment_hit_distance, RayHit};

/// Current version of the scene/episode JSON documents.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid generator config: {0}")]
    Generation(String),
    #[error("pose ({x:.3}, {y:.3}) is outside the scene bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unsupported schema version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
    /// Mirror-like wall: transparent to the depth sensor, solid for motion.
    #[serde(default)]
    pub deceptive: bool,
}

impl Wall {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self {
            a,
            b,
            deceptive: false,
        }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub label: String,
    pub position: Vec2,
    pub radius: f64,
}

/// Axis-aligned room footprint, kept for doorway-graph bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: Vec2,
    pub max: Vec2,
}

impl Room {
    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doorway {
    pub rooms: (usize, usize),
    pub center: Vec2,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Extent `[0, width] x [0, height]` in meters.
    pub width: f64,
    pub height: f64,
    pub walls: Vec<Wall>,
    pub landmarks: Vec<Landmark>,
    #[serde(default)]
    pub rooms: Vec<Room>,
    #[serde(default)]
    pub doorways: Vec<Doorway>,
    pub rng_seed: u64,
}

impl Scene {
    /// An empty rectangular area with no walls, used by fixtures.
    pub fn empty(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            walls: Vec::new(),
            landmarks: Vec::new(),
            rooms: Vec::new(),
            doorways: Vec::new(),
            rng_seed: 0,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(SceneError::Invalid("bounds must be positive".into()));
        }
        if let Some(w) = self.walls.iter().find(|w| w.length() <= 1e-6) {
            return Err(SceneError::Invalid(format!("degenerate wall at {:?}", w.a)));
        }
        if let Some(l) = self.landmarks.iter().find(|l| !self.contains(l.position) || l.radius <= 0.0) {
            return Err(SceneError::Invalid(format!("landmark '{}' outside bounds", l.label)));
        }
        Ok(())
    }

    pub fn landmark_index(&self, label: &str) -> Option<usize> {
        self.landmarks.iter().position(|l| l.label == label)
    }

    pub fn label_of(&self, sem: Semantic) -> &str {
        match sem {
            Semantic::None => "none",
            Semantic::Wall => "wall",
            Semantic::Landmark(i) => self
                .landmarks
                .get(i as usize)
                .map(|l| l.label.as_str())
                .unwrap_or("none"),
        }
    }

    /// Distance from `p` to the nearest solid geometry (walls of any kind and
    /// landmark discs).
    pub fn clearance(&self, p: Vec2) -> f64 {
        let wall = self
            .walls
            .iter()
            .map(|w| point_segment_distance(p, w.a, w.b))
            .fold(f64::INFINITY, f64::min);
        let disc = self
            .landmarks
            .iter()
            .map(|l| (p.distance(l.position) - l.radius).max(0.0))
            .fold(f64::INFINITY, f64::min);
        wall.min(disc)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

/// Semantic label of a ray's first hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Semantic {
    None,
    Wall,
    /// Index into [`Scene::landmarks`].
    Landmark(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub rays: usize,
    /// Field of view in radians.
    pub fov: f64,
    pub d_max: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            rays: 128,
            fov: std::f64::consts::FRAC_PI_2,
            d_max: 12.0,
        }
    }
}

impl SensorConfig {
    /// Heading offset of ray `r` relative to the sensor heading.
    pub fn ray_offset(&self, r: usize) -> f64 {
        if self.rays <= 1 {
            return 0.0;
        }
        self.fov * (r as f64 / (self.rays - 1) as f64 - 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub depth: Vec<f64>,
    pub semantic: Vec<Semantic>,
    pub pose_gt: Pose,
    pub odom: Pose,
}

/// Casts the sensor fan from `pose`. The returned observation carries
/// `odom = pose_gt`; the episode loop substitutes its odometry estimate.
pub fn sense(scene: &Scene, pose: &Pose, sensor: &SensorConfig) -> Result<Observation, SceneError> {
    if !scene.contains(pose.position()) {
        return Err(SceneError::OutOfBounds { x: pose.x, y: pose.y });
    }
    let mut depth = Vec::with_capacity(sensor.rays);
    let mut semantic = Vec::with_capacity(sensor.rays);
    for r in 0..sensor.rays {
        let dir = Vec2::from_angle(pose.theta + sensor.ray_offset(r));
        let hit = cast_ray(scene, pose.position(), dir, sensor.d_max);
        depth.push(hit.depth);
        semantic.push(hit.semantic);
    }
    Ok(Observation {
        depth,
        semantic,
        pose_gt: *pose,
        odom: *pose,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    /// Std of each translation component, meters.
    pub sigma_trans: f64,
    /// Std of the yaw change, radians.
    pub sigma_rot: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            sigma_trans: 0.01,
            sigma_rot: 0.2f64.to_radians(),
        }
    }
}

impl MotionNoise {
    pub const NONE: MotionNoise = MotionNoise {
        sigma_trans: 0.0,
        sigma_rot: 0.0,
    };

    /// Adds zero-mean Gaussian noise to a (non-STOP) action. With zero
    /// sigmas the action is returned unchanged and no randomness is drawn.
    pub fn perturb<R: Rng + ?Sized>(&self, a: &Action, rng: &mut R) -> Action {
        if a.is_stop {
            return *a;
        }
        let mut out = *a;
        if self.sigma_trans > 0.0 {
            let n = Normal::new(0.0, self.sigma_trans).expect("finite sigma");
            out.dx += n.sample(rng);
            out.dy += n.sample(rng);
        }
        if self.sigma_rot > 0.0 {
            let n = Normal::new(0.0, self.sigma_rot).expect("finite sigma");
            out.dtheta += n.sample(rng);
        }
        out
    }
}

/// Robot footprint radius used by collision truncation.
pub const FOOTPRINT_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub pose: Pose,
    pub collided: bool,
    /// Distance actually travelled.
    pub displacement: f64,
}

/// Advances `pose` by `action` (perturbed by `noise`). Translation stops
/// `FOOTPRINT_RADIUS` short of the first solid contact along the swept
/// segment; the yaw change is always applied.
pub fn step<R: Rng + ?Sized>(
    scene: &Scene,
    pose: &Pose,
    action: &Action,
    noise: &MotionNoise,
    rng: &mut R,
) -> StepOutcome {
    if action.is_stop {
        return StepOutcome {
            pose: *pose,
            collided: false,
            displacement: 0.0,
        };
    }
    let a = noise.perturb(action, rng);
    let start = pose.position();
    let target = pose.transform_point(Vec2::new(a.dx, a.dy));
    let delta = target - start;
    let len = delta.norm();
    let (travel, collided) = if len > 0.0 {
        let dir = delta * (1.0 / len);
        match first_solid_contact(scene, start, dir, len) {
            Some(contact) => ((contact - FOOTPRINT_RADIUS).max(0.0), true),
            None => (len, false),
        }
    } else {
        (0.0, false)
    };
    let p = if collided {
        start + delta * (travel / len)
    } else {
        target
    };
    StepOutcome {
        pose: Pose::new(p.x, p.y, pose.theta + a.dtheta),
        collided,
        displacement: travel,
    }
}

/// Distance along `dir` to the first wall (deceptive or not) or landmark
/// disc within `max_dist`, or the scene boundary.
fn first_solid_contact(scene: &Scene, origin: Vec2, dir: Vec2, max_dist: f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    for w in &scene.walls {
        if let Some(t) = segment_hit_distance(origin, dir, w.a, w.b) {
            best = best.min(t);
        }
    }
    for l in &scene.landmarks {
        if let Some(t) = raycast::disc_hit_distance(origin, dir, l.position, l.radius) {
            best = best.min(t);
        }
    }
    let corners = [
        Vec2::new(0.0, 0.0),
        Vec2::new(scene.width, 0.0),
        Vec2::new(scene.width, scene.height),
        Vec2::new(0.0, scene.height),
    ];
    for i in 0..4 {
        if let Some(t) = segment_hit_distance(origin, dir, corners[i], corners[(i + 1) % 4]) {
            best = best.min(t);
        }
    }
    (best <= max_dist).then_some(best)
}

/// Versioned on-disk form of a [`Scene`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDocument {
    pub version: u32,
    pub scene: Scene,
}

/// A navigation task in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub scene: Scene,
    pub start: Pose,
    /// Ordered landmark tokens ending with the goal token.
    pub instruction: Vec<String>,
    pub goal_position: Vec2,
    pub goal_label: String,
    #[serde(default = "default_success_radius")]
    pub success_radius: f64,
    pub max_steps: usize,
}

fn default_success_radius() -> f64 {
    3.0
}

impl Episode {
    pub fn validate(&self) -> Result<(), SceneError> {
        self.scene.validate()?;
        if self.scene.landmark_index(&self.goal_label).is_none() {
            return Err(SceneError::Invalid(format!(
                "goal label '{}' is not a scene landmark",
                self.goal_label
            )));
        }
        if !self.scene.contains(self.start.position()) {
            return Err(SceneError::OutOfBounds {
                x: self.start.x,
                y: self.start.y,
            });
        }
        Ok(())
    }
}

/// Versioned on-disk form of an [`Episode`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeDocument {
    pub version: u32,
    pub episode: Episode,
}

impl EpisodeDocument {
    pub fn new(episode: Episode) -> Self {
        Self {
            version: SCHEMA_VERSION,
            episode,
        }
    }

    pub fn from_json(s: &str) -> Result<Episode, SceneError> {
        let doc: EpisodeDocument = serde_json::from_str(s)?;
        if doc.version != SCHEMA_VERSION {
            return Err(SceneError::Version(doc.version));
        }
        doc.episode.validate()?;
        Ok(doc.episode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wall_ahead(dist: f64) -> Scene {
        let mut s = Scene::empty(10.0, 10.0);
        s.walls.push(Wall::new(Vec2::new(1.0 + dist, 2.0), Vec2::new(1.0 + dist, 8.0)));
        s
    }

    #[test]
    fn empty_scene_reports_max_range() {
        let s = Scene::empty(10.0, 10.0);
        let sensor = SensorConfig {
            d_max: 3.0,
            ..SensorConfig::default()
        };
        let obs = sense(&s, &Pose::new(5.0, 5.0, 0.7), &sensor).unwrap();
        assert_eq!(obs.depth.len(), 128);
        assert!(obs.depth.iter().all(|&d| d == 3.0));
        assert!(obs.semantic.iter().all(|&l| l == Semantic::None));
    }

    #[test]
    fn center_ray_hits_wall() {
        let s = wall_ahead(2.0);
        let sensor = SensorConfig {
            rays: 129,
            ..SensorConfig::default()
        };
        let obs = sense(&s, &Pose::new(1.0, 5.0, 0.0), &sensor).unwrap();
        assert!((obs.depth[64] - 2.0).abs() < 1e-6);
        assert_eq!(obs.semantic[64], Semantic::Wall);
    }

    #[test]
    fn landmark_in_front_of_wall() {
        let mut s = wall_ahead(4.0);
        s.landmarks.push(Landmark {
            label: "tv".into(),
            position: Vec2::new(3.0, 5.0),
            radius: 0.3,
        });
        let sensor = SensorConfig {
            rays: 129,
            ..SensorConfig::default()
        };
        let obs = sense(&s, &Pose::new(1.0, 5.0, 0.0), &sensor).unwrap();
        assert_eq!(s.label_of(obs.semantic[64]), "tv");
        assert!((obs.depth[64] - 1.7).abs() < 1e-9);
    }

    #[test]
    fn deceptive_wall_is_see_through_but_solid() {
        let mut s = wall_ahead(2.0);
        s.walls[0].deceptive = true;
        let sensor = SensorConfig {
            rays: 129,
            ..SensorConfig::default()
        };
        let obs = sense(&s, &Pose::new(1.0, 5.0, 0.0), &sensor).unwrap();
        assert_eq!(obs.depth[64], 12.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lim_free = Action::new(2.5, 0.0, 0.0, 5.0);
        let out = step(&s, &Pose::new(1.0, 5.0, 0.0), &lim_free, &MotionNoise::NONE, &mut rng);
        assert!(out.collided);
    }

    #[test]
    fn sensing_outside_bounds_fails() {
        let s = Scene::empty(4.0, 4.0);
        assert!(matches!(
            sense(&s, &Pose::new(5.0, 1.0, 0.0), &SensorConfig::default()),
            Err(SceneError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn step_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = wall_ahead(0.4);
        let start = Pose::new(1.0, 5.0, 0.0);
        let out = step(&s, &start, &Action::zero(), &MotionNoise::NONE, &mut rng);
        assert_eq!(out.pose, start);
        assert!(!out.collided);

        let out = step(&s, &start, &Action::new(1.0, 0.0, 0.0, 2.0), &MotionNoise::NONE, &mut rng);
        assert!(out.collided);
        assert!((out.pose.x - 1.2).abs() < 1e-12, "{:?}", out.pose);
        assert!((out.displacement - 0.2).abs() < 1e-12);

        let free = Scene::empty(10.0, 10.0);
        let a = Action::new(0.3, 0.1, 0.4, 1.0);
        let out = step(&free, &start, &a, &MotionNoise::NONE, &mut rng);
        assert_eq!(out.pose, start.apply(&a));
    }

    #[test]
    fn noisy_step_is_seeded() {
        let s = Scene::empty(10.0, 10.0);
        let a = Action::new(0.5, 0.0, 0.1, 1.0);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            step(&s, &Pose::new(5.0, 5.0, 0.0), &a, &MotionNoise::default(), &mut rng).pose
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn episode_document_round_trip() {
        let mut scene = Scene::empty(6.0, 6.0);
        scene.landmarks.push(Landmark {
            label: "tv".into(),
            position: Vec2::new(4.0, 4.0),
            radius: 0.3,
        });
        let ep = Episode {
            id: "e0".into(),
            scene,
            start: Pose::new(1.0, 1.0, 0.0),
            instruction: vec!["tv".into()],
            goal_position: Vec2::new(4.0, 4.0),
            goal_label: "tv".into(),
            success_radius: 3.0,
            max_steps: 10,
        };
        let json = serde_json::to_string(&EpisodeDocument::new(ep.clone())).unwrap();
        assert_eq!(EpisodeDocument::from_json(&json).unwrap(), ep);

        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(matches!(EpisodeDocument::from_json(&bad), Err(SceneError::Version(9))));
    }
}
