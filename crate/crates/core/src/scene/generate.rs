//! Seeded generator for grid-of-rooms scenes and navigation episodes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec2};

use super::{Doorway, Episode, GeodesicField, Landmark, Room, Scene, SceneError, Wall};

const MIN_ROOM_SIDE: f64 = 2.5;
const LANDMARK_WALL_MARGIN: f64 = 0.7;
const LANDMARK_SPACING: f64 = 1.2;
const DOOR_KEEPOUT: f64 = 1.2;
const PLACEMENT_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub width: f64,
    pub height: f64,
    pub rooms_x: usize,
    pub rooms_y: usize,
    pub door_width: f64,
    /// Probability of a door on a wall that is not on the spanning tree.
    pub extra_door_prob: f64,
    pub landmarks_per_room: usize,
    /// Max shift of interior walls as a fraction of the nominal room size.
    pub wall_jitter: f64,
    pub clutter_per_room: usize,
    /// Probability that a doorless interior wall is mirror-like.
    pub deceptive_prob: f64,
    pub vocabulary: Vec<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            width: 15.0,
            height: 10.0,
            rooms_x: 3,
            rooms_y: 2,
            door_width: 1.1,
            extra_door_prob: 0.25,
            landmarks_per_room: 1,
            wall_jitter: 0.15,
            clutter_per_room: 0,
            deceptive_prob: 0.0,
            vocabulary: [
                "tv", "sofa", "bed", "sink", "plant", "fridge", "table", "lamp", "piano", "desk", "bathtub",
                "oven", "shelf", "clock", "mirror", "chair",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), SceneError> {
        let err = |m: String| Err(SceneError::Generation(m));
        if self.rooms_x == 0 || self.rooms_y == 0 {
            return err("room count must be at least 1".into());
        }
        let (rw, rh) = (self.width / self.rooms_x as f64, self.height / self.rooms_y as f64);
        let min_side = rw.min(rh) * (1.0 - 2.0 * self.wall_jitter.clamp(0.0, 0.4));
        if !(min_side >= MIN_ROOM_SIDE) {
            return err(format!(
                "{}x{} rooms do not fit in {}x{} m (min side {MIN_ROOM_SIDE} m)",
                self.rooms_x, self.rooms_y, self.width, self.height
            ));
        }
        if self.door_width <= 0.0 || self.door_width > min_side - 1.0 {
            return err(format!("door width {} does not fit the rooms", self.door_width));
        }
        let needed = self.rooms_x * self.rooms_y * self.landmarks_per_room;
        if needed > self.vocabulary.len() {
            return err(format!("{needed} landmarks need a vocabulary of at least {needed} tokens"));
        }
        Ok(())
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Splits the wall `a -> b` around a door of `width` centered at fraction
/// `t` of its length.
fn wall_with_door(a: Vec2, b: Vec2, t: f64, width: f64, walls: &mut Vec<Wall>) -> Vec2 {
    let len = a.distance(b);
    let dir = (b - a) * (1.0 / len);
    let c = t * len;
    let lo = c - width / 2.0;
    let hi = c + width / 2.0;
    if lo > 1e-6 {
        walls.push(Wall::new(a, a + dir * lo));
    }
    if len - hi > 1e-6 {
        walls.push(Wall::new(a + dir * hi, b));
    }
    a + dir * c
}

/// Generates a grid-of-rooms scene. Deterministic in `(cfg, seed)`; every
/// room is reachable from every other through doorways.
pub fn generate_scene(cfg: &GeneratorConfig, seed: u64) -> Result<Scene, SceneError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, ny) = (cfg.rooms_x, cfg.rooms_y);
    let (rw, rh) = (cfg.width / nx as f64, cfg.height / ny as f64);
    let jitter = cfg.wall_jitter.clamp(0.0, 0.4);

    let mut xs = vec![0.0];
    for i in 1..nx {
        xs.push(i as f64 * rw + rng.random_range(-1.0..=1.0) * jitter * rw);
    }
    xs.push(cfg.width);
    let mut ys = vec![0.0];
    for j in 1..ny {
        ys.push(j as f64 * rh + rng.random_range(-1.0..=1.0) * jitter * rh);
    }
    ys.push(cfg.height);

    let room_id = |i: usize, j: usize| j * nx + i;
    let mut rooms = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            rooms.push(Room {
                min: Vec2::new(xs[i], ys[j]),
                max: Vec2::new(xs[i + 1], ys[j + 1]),
            });
        }
    }

    // Interior walls between horizontally (vertical wall) or vertically
    // adjacent rooms.
    let mut adjacency: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                adjacency.push((room_id(i, j), room_id(i + 1, j)));
            }
            if j + 1 < ny {
                adjacency.push((room_id(i, j), room_id(i, j + 1)));
            }
        }
    }
    let mut order: Vec<usize> = (0..adjacency.len()).collect();
    order.shuffle(&mut rng);
    let mut uf = UnionFind((0..nx * ny).collect());
    let mut door = vec![false; adjacency.len()];
    for &k in &order {
        let (a, b) = adjacency[k];
        if uf.union(a, b) {
            door[k] = true;
        }
    }
    for d in door.iter_mut() {
        if !*d && rng.random_bool(cfg.extra_door_prob.clamp(0.0, 1.0)) {
            *d = true;
        }
    }

    let mut walls = vec![
        Wall::new(Vec2::new(0.0, 0.0), Vec2::new(cfg.width, 0.0)),
        Wall::new(Vec2::new(cfg.width, 0.0), Vec2::new(cfg.width, cfg.height)),
        Wall::new(Vec2::new(cfg.width, cfg.height), Vec2::new(0.0, cfg.height)),
        Wall::new(Vec2::new(0.0, cfg.height), Vec2::new(0.0, 0.0)),
    ];
    let mut doorways = Vec::new();
    for (k, &(a, b)) in adjacency.iter().enumerate() {
        let (ra, rb) = (rooms[a], rooms[b]);
        let (p, q) = if (ra.max.x - rb.min.x).abs() < 1e-9 {
            (Vec2::new(ra.max.x, ra.min.y), Vec2::new(ra.max.x, ra.max.y))
        } else {
            (Vec2::new(ra.min.x, ra.max.y), Vec2::new(ra.max.x, ra.max.y))
        };
        let len = p.distance(q);
        if door[k] {
            let margin = (0.5 + cfg.door_width / 2.0) / len;
            let t = rng.random_range(margin..=(1.0 - margin));
            let center = wall_with_door(p, q, t, cfg.door_width, &mut walls);
            doorways.push(Doorway {
                rooms: (a, b),
                center,
                width: cfg.door_width,
            });
        } else {
            let mut w = Wall::new(p, q);
            w.deceptive = cfg.deceptive_prob > 0.0 && rng.random_bool(cfg.deceptive_prob.clamp(0.0, 1.0));
            walls.push(w);
        }
    }

    let mut labels = cfg.vocabulary.clone();
    labels.shuffle(&mut rng);
    let mut labels = labels.into_iter();
    let mut landmarks: Vec<Landmark> = Vec::new();
    for room in &rooms {
        for _ in 0..cfg.landmarks_per_room {
            let radius = rng.random_range(0.2..=0.35);
            let m = LANDMARK_WALL_MARGIN + radius;
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let p = Vec2::new(
                    rng.random_range(room.min.x + m..=room.max.x - m),
                    rng.random_range(room.min.y + m..=room.max.y - m),
                );
                let spaced = landmarks.iter().all(|l| l.position.distance(p) >= LANDMARK_SPACING);
                let off_doors = doorways.iter().all(|d| d.center.distance(p) >= DOOR_KEEPOUT + radius);
                if spaced && off_doors {
                    placed = Some(p);
                    break;
                }
            }
            if let Some(position) = placed {
                landmarks.push(Landmark {
                    label: labels.next().expect("vocabulary checked in validate"),
                    position,
                    radius,
                });
            }
        }
    }

    for room in &rooms {
        for _ in 0..cfg.clutter_per_room {
            let m = 1.3;
            if room.max.x - room.min.x <= 2.0 * m || room.max.y - room.min.y <= 2.0 * m {
                continue;
            }
            for _ in 0..PLACEMENT_ATTEMPTS {
                let c = Vec2::new(
                    rng.random_range(room.min.x + m..=room.max.x - m),
                    rng.random_range(room.min.y + m..=room.max.y - m),
                );
                let half = rng.random_range(0.4..=0.6);
                let dir = Vec2::from_angle(rng.random_range(0.0..std::f64::consts::PI));
                let ok = landmarks.iter().all(|l| l.position.distance(c) >= 1.0 + half + l.radius)
                    && doorways.iter().all(|d| d.center.distance(c) >= DOOR_KEEPOUT + half);
                if ok {
                    walls.push(Wall::new(c - dir * half, c + dir * half));
                    break;
                }
            }
        }
    }

    let scene = Scene {
        width: cfg.width,
        height: cfg.height,
        walls,
        landmarks,
        rooms,
        doorways,
        rng_seed: seed,
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeGenConfig {
    pub max_steps: usize,
    pub success_radius: f64,
    pub min_geodesic: f64,
    pub max_geodesic: f64,
    /// Minimum distance from the start to any solid geometry.
    pub start_clearance: f64,
}

impl Default for EpisodeGenConfig {
    fn default() -> Self {
        Self {
            max_steps: 100,
            success_radius: 3.0,
            min_geodesic: 6.0,
            max_geodesic: 16.0,
            start_clearance: 0.6,
        }
    }
}

/// Samples a start pose, a goal landmark in another room and a two-token
/// instruction (a landmark near the goal, then the goal).
pub fn generate_episode(scene: &Scene, cfg: &EpisodeGenConfig, seed: u64, id: &str) -> Result<Episode, SceneError> {
    if scene.landmarks.is_empty() {
        return Err(SceneError::Generation("scene has no landmarks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room_of = |p: Vec2| scene.rooms.iter().position(|r| r.contains(p));

    for _ in 0..PLACEMENT_ATTEMPTS {
        let goal_idx = rng.random_range(0..scene.landmarks.len());
        let goal = &scene.landmarks[goal_idx];
        let start = Vec2::new(
            rng.random_range(0.0..scene.width),
            rng.random_range(0.0..scene.height),
        );
        if scene.clearance(start) < cfg.start_clearance {
            continue;
        }
        if scene.rooms.len() > 1 && room_of(start) == room_of(goal.position) {
            continue;
        }
        let field = GeodesicField::new(scene, goal.position);
        let geo = field.distance(start);
        if !(geo >= cfg.min_geodesic && geo <= cfg.max_geodesic) {
            continue;
        }
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);

        // Prefer a landmark in the goal's room as the intermediate token,
        // then the landmark closest to the goal.
        let mut others: Vec<&Landmark> = scene.landmarks.iter().filter(|l| l.label != goal.label).collect();
        others.sort_by(|a, b| {
            let ka = (room_of(a.position) != room_of(goal.position), a.position.distance(goal.position));
            let kb = (room_of(b.position) != room_of(goal.position), b.position.distance(goal.position));
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut instruction = Vec::new();
        if let Some(via) = others.first() {
            instruction.push(via.label.clone());
        }
        instruction.push(goal.label.clone());

        return Ok(Episode {
            id: id.to_string(),
            scene: scene.clone(),
            start: Pose::new(start.x, start.y, theta),
            instruction,
            goal_position: goal.position,
            goal_label: goal.label.clone(),
            success_radius: cfg.success_radius,
            max_steps: cfg.max_steps,
        });
    }
    Err(SceneError::Generation(format!(
        "no start/goal pair within geodesic range [{}, {}]",
        cfg.min_geodesic, cfg.max_geodesic
    )))
}
