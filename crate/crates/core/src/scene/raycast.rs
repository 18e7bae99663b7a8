use crate::geometry::Vec2;

use super::{Scene, Semantic};

/// Depth assigned when a ray starts on a surface; keeps depth strictly positive.
const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub depth: f64,
    pub semantic: Semantic,
}

/// Distance along the unit ray `origin + t*dir` (t >= 0) to segment `[a, b]`.
pub fn segment_hit_distance(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = a - origin;
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    (t >= 0.0 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Distance along the unit ray to the first intersection with a disc
/// boundary. Origins inside the disc report 0.
pub fn disc_hit_distance(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.dot(oc) - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - disc.sqrt())
}

/// First visible hit along a unit ray, clipped to `d_max`. Deceptive walls
/// are transparent to sensing.
pub fn cast_ray(scene: &Scene, origin: Vec2, dir: Vec2, d_max: f64) -> RayHit {
    let mut depth = d_max;
    let mut semantic = Semantic::None;
    for w in scene.walls.iter().filter(|w| !w.deceptive) {
        if let Some(t) = segment_hit_distance(origin, dir, w.a, w.b) {
            if t < depth {
                depth = t;
                semantic = Semantic::Wall;
            }
        }
    }
    for (i, l) in scene.landmarks.iter().enumerate() {
        if let Some(t) = disc_hit_distance(origin, dir, l.position, l.radius) {
            if t < depth {
                depth = t;
                semantic = Semantic::Landmark(i as u16);
            }
        }
    }
    RayHit {
        depth: depth.max(MIN_DEPTH),
        semantic,
    }
}
