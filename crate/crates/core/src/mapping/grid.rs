use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scene::{Observation, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOddsParams {
    pub hit: f32,
    pub miss: f32,
    pub clamp: f32,
    pub occupied_above: f32,
    pub free_below: f32,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self {
            hit: 0.85,
            miss: -0.4,
            clamp: 4.0,
            occupied_above: 0.5,
            free_below: -0.2,
        }
    }
}

/// Cell index `(ix, iy)`.
pub type Cell = (usize, usize);

/// Log-odds occupancy grid. Cell `(0, 0)` is centered on `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
    pub params: LogOddsParams,
    log_odds: Vec<f32>,
}

/// Cells grown on each side whenever the grid must expand.
const GROW_MARGIN: usize = 16;

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Vec2, width: usize, height: usize) -> Self {
        Self {
            resolution,
            origin,
            width,
            height,
            params: LogOddsParams::default(),
            log_odds: vec![0.0; width * height],
        }
    }

    /// A square grid of side `2 * half_extent` centered on `center`.
    pub fn centered(resolution: f64, center: Vec2, half_extent: f64) -> Self {
        let half = (half_extent / resolution).ceil() as usize;
        let n = 2 * half + 1;
        let origin = Vec2::new(
            center.x - half as f64 * resolution,
            center.y - half as f64 * resolution,
        );
        Self::new(resolution, origin, n, n)
    }

    fn idx(&self, c: Cell) -> usize {
        c.1 * self.width + c.0
    }

    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    /// Signed cell coordinates of a world point (may be out of bounds).
    pub fn world_to_cell_signed(&self, p: Vec2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).round() as i64,
            ((p.y - self.origin.y) / self.resolution).round() as i64,
        )
    }

    pub fn world_to_cell(&self, p: Vec2) -> Option<Cell> {
        let (ix, iy) = self.world_to_cell_signed(p);
        self.in_bounds(ix, iy).then_some((ix as usize, iy as usize))
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + c.0 as f64 * self.resolution,
            self.origin.y + c.1 as f64 * self.resolution,
        )
    }

    pub fn log_odds(&self, c: Cell) -> f32 {
        self.log_odds[self.idx(c)]
    }

    pub fn state(&self, c: Cell) -> CellState {
        let l = self.log_odds(c);
        if l >= self.params.occupied_above {
            CellState::Occupied
        } else if l <= self.params.free_below {
            CellState::Free
        } else {
            CellState::Unknown
        }
    }

    pub fn set_state(&mut self, c: Cell, state: CellState) {
        let v = match state {
            CellState::Unknown => 0.0,
            CellState::Free => -self.params.clamp,
            CellState::Occupied => self.params.clamp,
        };
        let i = self.idx(c);
        self.log_odds[i] = v;
    }

    fn add(&mut self, c: Cell, delta: f32) {
        let clamp = self.params.clamp;
        let i = self.idx(c);
        self.log_odds[i] = (self.log_odds[i] + delta).clamp(-clamp, clamp);
    }

    pub fn count(&self, state: CellState) -> usize {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&c| self.state(c) == state)
            .count()
    }

    /// Expands the grid (keeping contents) until the world box
    /// `[lo, hi]` is covered.
    pub fn ensure_covers(&mut self, lo: Vec2, hi: Vec2) {
        let (lx, ly) = self.world_to_cell_signed(lo);
        let (hx, hy) = self.world_to_cell_signed(hi);
        let grow_lo_x = if lx < 0 { (-lx) as usize + GROW_MARGIN } else { 0 };
        let grow_lo_y = if ly < 0 { (-ly) as usize + GROW_MARGIN } else { 0 };
        let grow_hi_x = if hx >= self.width as i64 {
            (hx - self.width as i64 + 1) as usize + GROW_MARGIN
        } else {
            0
        };
        let grow_hi_y = if hy >= self.height as i64 {
            (hy - self.height as i64 + 1) as usize + GROW_MARGIN
        } else {
            0
        };
        if grow_lo_x + grow_lo_y + grow_hi_x + grow_hi_y == 0 {
            return;
        }
        let nw = self.width + grow_lo_x + grow_hi_x;
        let nh = self.height + grow_lo_y + grow_hi_y;
        let mut data = vec![0.0; nw * nh];
        for y in 0..self.height {
            let src = &self.log_odds[y * self.width..(y + 1) * self.width];
            let dst = (y + grow_lo_y) * nw + grow_lo_x;
            data[dst..dst + self.width].copy_from_slice(src);
        }
        self.origin = Vec2::new(
            self.origin.x - grow_lo_x as f64 * self.resolution,
            self.origin.y - grow_lo_y as f64 * self.resolution,
        );
        self.width = nw;
        self.height = nh;
        self.log_odds = data;
    }

    /// Integrates one observation at its odometry pose. Cells along each ray
    /// receive free evidence; the terminal cell receives occupied evidence
    /// unless the ray reached `d_max`.
    pub fn update(&mut self, obs: &Observation, sensor: &SensorConfig) {
        let pose = obs.odom;
        let reach = sensor.d_max + self.resolution;
        self.ensure_covers(
            Vec2::new(pose.x - reach, pose.y - reach),
            Vec2::new(pose.x + reach, pose.y + reach),
        );
        let start = self.world_to_cell_signed(pose.position());
        for (r, &depth) in obs.depth.iter().enumerate() {
            let dir = Vec2::from_angle(pose.theta + sensor.ray_offset(r));
            let end_world = pose.position() + dir * depth;
            let end = self.world_to_cell_signed(end_world);
            let max_range = depth >= sensor.d_max;
            let line = bresenham(start, end);
            let last = line.len() - 1;
            for (k, &(x, y)) in line.iter().enumerate() {
                if !self.in_bounds(x, y) {
                    break;
                }
                let c = (x as usize, y as usize);
                if k == last && !max_range {
                    self.add(c, self.params.hit);
                } else {
                    self.add(c, self.params.miss);
                }
            }
        }
    }
}

/// Integer Bresenham line from `a` to `b`, both endpoints included.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = (b.1 - a.1).abs();
    let sx = if b.0 >= a.0 { 1 } else { -1 };
    let sy = if b.1 >= a.1 { 1 } else { -1 };
    let mut err = dx - dy;
    let mut out = Vec::with_capacity((dx.max(dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dy {
            err -= dy;
            x += sx;
        }
        if e2 < dx {
            err += dx;
            y += sy;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::scene::Semantic;

    fn single_ray(depth: f64, d_max: f64) -> (Observation, SensorConfig) {
        let sensor = SensorConfig {
            rays: 1,
            fov: 0.0,
            d_max,
        };
        let pose = Pose::new(0.0, 0.0, 0.0);
        (
            Observation {
                depth: vec![depth],
                semantic: vec![Semantic::Wall],
                pose_gt: pose,
                odom: pose,
            },
            sensor,
        )
    }

    #[test]
    fn bresenham_cell_count() {
        assert_eq!(bresenham((0, 0), (20, 0)).len(), 21);
        assert_eq!(bresenham((0, 0), (3, 3)), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(bresenham((2, 1), (2, 1)), vec![(2, 1)]);
    }

    #[test]
    fn single_ray_marks_free_then_occupied() {
        let (obs, sensor) = single_ray(2.0, 12.0);
        let mut g = OccupancyGrid::centered(0.1, Vec2::new(0.0, 0.0), 13.0);
        g.update(&obs, &sensor);
        assert_eq!(g.count(CellState::Free), 20);
        assert_eq!(g.count(CellState::Occupied), 1);
        assert_eq!(g.state(g.world_to_cell(Vec2::new(2.0, 0.0)).unwrap()), CellState::Occupied);
    }

    #[test]
    fn max_range_ray_has_no_hit() {
        let (obs, sensor) = single_ray(3.0, 3.0);
        let mut g = OccupancyGrid::centered(0.1, Vec2::new(0.0, 0.0), 4.0);
        g.update(&obs, &sensor);
        assert_eq!(g.count(CellState::Occupied), 0);
        assert_eq!(g.count(CellState::Free), 31);
    }

    #[test]
    fn repeated_observation_is_monotone() {
        let (obs, sensor) = single_ray(2.0, 12.0);
        let mut g = OccupancyGrid::centered(0.1, Vec2::new(0.0, 0.0), 13.0);
        g.update(&obs, &sensor);
        let before = g.clone();
        g.update(&obs, &sensor);
        for y in 0..g.height {
            for x in 0..g.width {
                let c = (x, y);
                assert_eq!(g.state(c), before.state(c));
                assert!(g.log_odds(c).abs() >= before.log_odds(c).abs());
            }
        }
    }

    #[test]
    fn grid_grows_to_cover_observation() {
        let (mut obs, sensor) = single_ray(2.0, 12.0);
        obs.odom = Pose::new(30.0, -5.0, 0.0);
        let mut g = OccupancyGrid::centered(0.15, Vec2::new(0.0, 0.0), 3.0);
        let probe = g.world_to_cell(Vec2::new(0.0, 0.0)).unwrap();
        g.set_state(probe, CellState::Occupied);
        g.update(&obs, &sensor);
        assert!(g.world_to_cell(Vec2::new(42.0, -17.0)).is_some());
        assert_eq!(g.state(g.world_to_cell(Vec2::new(0.0, 0.0)).unwrap()), CellState::Occupied);
        assert_eq!(g.state(g.world_to_cell(Vec2::new(32.0, -5.0)).unwrap()), CellState::Occupied);
    }
}
