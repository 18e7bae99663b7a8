//! Occupancy mapping, frontier extraction and candidate-trajectory
//! generation for the base frontier planner.

mod astar;
mod frontier;
mod grid;

use serde::{Deserialize, Serialize};

use crate::geometry::{integrate_poses, resample_to_horizon, wrap_angle, Action, PlatformLimits, Pose, Vec2};

pub use astar::{CostField, ShortestPaths, TraversalCost};
pub use frontier::{extract_frontiers, is_frontier_cell, Frontier, DEFAULT_MIN_FRONTIER_CELLS};
pub use grid::{bresenham, Cell, CellState, LogOddsParams, OccupancyGrid};

/// Default occupancy-grid resolution, meters per cell.
pub const MAP_RESOLUTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CandidateKind {
    Frontier,
    Rotation { angle: f64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrajectory {
    pub id: usize,
    pub kind: CandidateKind,
    pub actions: Vec<Action>,
    /// Poses induced by `actions` from the planning pose.
    pub poses: Vec<Pose>,
    pub target_frontier: Option<Frontier>,
    /// Full path cost to the target frontier (0 for rotations and STOP).
    pub path_cost: f64,
}

impl CandidateTrajectory {
    pub fn is_stop(&self) -> bool {
        matches!(self.kind, CandidateKind::Stop)
    }
}

/// Weights of the base planner's native score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseScoreParams {
    pub w_size: f64,
    pub w_dist: f64,
    pub b_rot: f64,
    /// Score of an armed STOP candidate.
    pub stop_bonus: f64,
}

impl Default for BaseScoreParams {
    fn default() -> Self {
        Self {
            w_size: 1.0,
            w_dist: 0.25,
            b_rot: 0.1,
            stop_bonus: 1000.0,
        }
    }
}

/// The base planner's native score `S_base`.
///
/// Frontier candidates: `w_size * ln(1 + size) - w_dist * path_cost`.
/// Rotations get the fixed bonus `b_rot`. STOP is `-inf` unless armed.
pub fn base_score(c: &CandidateTrajectory, params: &BaseScoreParams, stop_armed: bool) -> f64 {
    match c.kind {
        CandidateKind::Frontier => {
            let size = c.target_frontier.as_ref().map_or(0, |f| f.size) as f64;
            params.w_size * size.ln_1p() - params.w_dist * c.path_cost
        }
        CandidateKind::Rotation { .. } => params.b_rot,
        CandidateKind::Stop => {
            if stop_armed {
                params.stop_bonus
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateConfig {
    pub k: usize,
    pub horizon: usize,
    pub min_frontier_cells: usize,
    pub traversal: TraversalCost,
    /// In-place scan angles, radians, in padding order.
    pub rotation_angles: Vec<f64>,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
        Self {
            k: 8,
            horizon: 4,
            min_frontier_cells: DEFAULT_MIN_FRONTIER_CELLS,
            traversal: TraversalCost::default(),
            rotation_angles: vec![FRAC_PI_4, -FRAC_PI_4, FRAC_PI_2, -FRAC_PI_2],
        }
    }
}

/// Path poses from the agent along grid cells: the first pose is `odom`,
/// every following pose sits on a cell center facing along its incoming
/// segment.
fn cells_to_poses(grid: &OccupancyGrid, odom: &Pose, cells: &[Cell]) -> Vec<Pose> {
    let mut out = vec![*odom];
    let mut prev = odom.position();
    for &c in cells.iter().skip(1) {
        let p = grid.cell_center(c);
        let d = p - prev;
        if d.norm() < 1e-12 {
            continue;
        }
        out.push(Pose::new(p.x, p.y, d.y.atan2(d.x)));
        prev = p;
    }
    out
}

/// Cuts a pose polyline after `max_len` meters of arc length.
fn truncate_path(path: &[Pose], max_len: f64) -> Vec<Pose> {
    let mut out = vec![path[0]];
    let mut acc = 0.0;
    for w in path.windows(2) {
        let seg = w[0].position().distance(w[1].position());
        if acc + seg >= max_len {
            let t = if seg > 0.0 { (max_len - acc) / seg } else { 0.0 };
            let p = w[0].position() + (w[1].position() - w[0].position()) * t;
            out.push(Pose::new(p.x, p.y, w[1].theta));
            return out;
        }
        acc += seg;
        out.push(w[1]);
    }
    out
}

fn rotation_candidate(odom: &Pose, angle: f64, horizon: usize, limits: &PlatformLimits) -> CandidateTrajectory {
    let kappa = (angle.abs() / limits.max_rotation(1.0)).max(1.0);
    let mut actions = vec![Action::new(0.0, 0.0, wrap_angle(angle), kappa)];
    actions.resize(horizon.max(1), Action::zero());
    let poses = integrate_poses(odom, &actions, limits).expect("rotation scan is feasible by construction");
    CandidateTrajectory {
        id: 0,
        kind: CandidateKind::Rotation { angle },
        actions,
        poses,
        target_frontier: None,
        path_cost: 0.0,
    }
}

fn stop_candidate(odom: &Pose) -> CandidateTrajectory {
    CandidateTrajectory {
        id: 0,
        kind: CandidateKind::Stop,
        actions: vec![Action::stop()],
        poses: vec![*odom],
        target_frontier: None,
        path_cost: 0.0,
    }
}

/// `P.Candidates(M_t, K)`: frontier paths ranked by base utility, padded
/// with a STOP candidate and in-place rotation scans, at most `cfg.k` in
/// total. Output order is frontiers (best first), rotations, STOP; ids are
/// positions in that list.
pub fn candidates(
    grid: &OccupancyGrid,
    odom: &Pose,
    cfg: &CandidateConfig,
    limits: &PlatformLimits,
    base: &BaseScoreParams,
) -> Vec<CandidateTrajectory> {
    let k = cfg.k.max(1);
    let horizon = cfg.horizon.max(1);
    let frontiers = extract_frontiers(grid, cfg.min_frontier_cells);

    let mut frontier_cands: Vec<(f64, CandidateTrajectory)> = Vec::new();
    if let Some(start) = grid.world_to_cell(odom.position()) {
        let field = CostField::new(grid, &cfg.traversal);
        // Target each frontier at its cell nearest the centroid.
        let targets: Vec<Cell> = frontiers
            .iter()
            .map(|f| {
                *f.cells
                    .iter()
                    .min_by(|a, b| {
                        let da = grid.cell_center(**a).distance(f.centroid);
                        let db = grid.cell_center(**b).distance(f.centroid);
                        da.total_cmp(&db)
                    })
                    .expect("frontiers are non-empty")
            })
            .collect();
        let tree = field.shortest_paths(start, &targets);
        let max_len = horizon as f64 * limits.max_translation(1.0);
        for (f, &t) in frontiers.iter().zip(&targets) {
            let (Some(cells), Some(cost)) = (tree.path(t), tree.cost(t)) else {
                continue;
            };
            let path = cells_to_poses(grid, odom, &cells);
            if path.len() < 2 {
                continue;
            }
            let cut = truncate_path(&path, max_len);
            let Ok(res) = resample_to_horizon(&cut, horizon, limits) else {
                continue;
            };
            if res.degenerate {
                continue;
            }
            let poses = integrate_poses(odom, &res.actions, limits).expect("resampled actions are clamped");
            let cand = CandidateTrajectory {
                id: 0,
                kind: CandidateKind::Frontier,
                actions: res.actions,
                poses,
                target_frontier: Some(f.clone()),
                path_cost: cost,
            };
            frontier_cands.push((base_score(&cand, base, false), cand));
        }
    }
    frontier_cands.sort_by(|(sa, a), (sb, b)| {
        let (ca, cb) = (
            a.target_frontier.as_ref().unwrap().centroid,
            b.target_frontier.as_ref().unwrap().centroid,
        );
        sb.total_cmp(sa)
            .then(a.path_cost.total_cmp(&b.path_cost))
            .then(ca.x.total_cmp(&cb.x))
            .then(ca.y.total_cmp(&cb.y))
    });

    // Padding slots are reserved for STOP first, then the rotation scans.
    let reserved = (cfg.rotation_angles.len() + 1).min(k - 1);
    let n_frontier = frontier_cands.len().min(k - reserved);
    let n_pad = k - n_frontier;
    let with_stop = n_pad >= 1;
    let n_rot = n_pad.saturating_sub(1).min(cfg.rotation_angles.len());

    let mut out: Vec<CandidateTrajectory> = frontier_cands.into_iter().take(n_frontier).map(|(_, c)| c).collect();
    for &angle in cfg.rotation_angles.iter().take(n_rot) {
        out.push(rotation_candidate(odom, angle, horizon, limits));
    }
    if with_stop {
        out.push(stop_candidate(odom));
    }
    for (i, c) in out.iter_mut().enumerate() {
        c.id = i;
    }
    out
}

/// World-frame box covering all cells of the grid.
pub fn grid_extent(grid: &OccupancyGrid) -> (Vec2, Vec2) {
    let lo = grid.origin;
    let hi = grid.cell_center((grid.width - 1, grid.height - 1));
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Corridor along +x: free for x in 0..30 cells, y in 9..=11, walls on
    /// y = 8 and y = 12, unknown beyond x = 30.
    fn corridor() -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.15, Vec2::new(0.0, 0.0), 50, 21);
        for x in 0..=30 {
            g.set_state((x, 8), CellState::Occupied);
            g.set_state((x, 12), CellState::Occupied);
            for y in 9..=11 {
                g.set_state((x, y), CellState::Free);
            }
        }
        g
    }

    #[test]
    fn corridor_first_candidate_goes_straight() {
        let g = corridor();
        let odom = Pose::new(g.cell_center((2, 10)).x, g.cell_center((2, 10)).y, 0.0);
        let cfg = CandidateConfig {
            k: 5,
            ..CandidateConfig::default()
        };
        let lim = PlatformLimits::default();
        let c = candidates(&g, &odom, &cfg, &lim, &BaseScoreParams::default());
        assert_eq!(c.len(), 5);
        assert_eq!(c[0].kind, CandidateKind::Frontier);
        assert_eq!(c[0].actions.len(), 4);
        for a in &c[0].actions {
            assert!((a.dx - 0.5).abs() < 1e-9, "{a:?}");
            assert!(a.dy.abs() < 1e-9 && a.dtheta.abs() < 1e-9);
        }
        assert!(c.iter().any(|c| c.is_stop()));
        for (i, cand) in c.iter().enumerate() {
            assert_eq!(cand.id, i);
            assert!(lim.is_feasible(&cand.actions[0]));
        }
    }

    #[test]
    fn blocked_agent_gets_rotations_and_stop() {
        let mut g = OccupancyGrid::new(0.15, Vec2::new(0.0, 0.0), 9, 9);
        for y in 0..9 {
            for x in 0..9 {
                let wall = !(3..=5).contains(&x) || !(3..=5).contains(&y);
                g.set_state((x, y), if wall { CellState::Occupied } else { CellState::Free });
            }
        }
        let odom = Pose::new(g.cell_center((4, 4)).x, g.cell_center((4, 4)).y, 0.0);
        let c = candidates(
            &g,
            &odom,
            &CandidateConfig::default(),
            &PlatformLimits::default(),
            &BaseScoreParams::default(),
        );
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|c| c.kind != CandidateKind::Frontier));
        assert!(c.last().unwrap().is_stop());
    }

    #[test]
    fn k_one_returns_best_frontier() {
        let g = corridor();
        let odom = Pose::new(g.cell_center((2, 10)).x, g.cell_center((2, 10)).y, 0.0);
        let cfg = CandidateConfig {
            k: 1,
            ..CandidateConfig::default()
        };
        let c = candidates(&g, &odom, &cfg, &PlatformLimits::default(), &BaseScoreParams::default());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].kind, CandidateKind::Frontier);
    }

    #[test]
    fn candidates_are_deterministic() {
        let g = corridor();
        let odom = Pose::new(1.0, 1.5, 0.4);
        let run = || candidates(&g, &odom, &CandidateConfig::default(), &PlatformLimits::default(), &BaseScoreParams::default());
        assert_eq!(run(), run());
    }

    fn frontier_cand(size: usize, cost: f64) -> CandidateTrajectory {
        CandidateTrajectory {
            id: 0,
            kind: CandidateKind::Frontier,
            actions: vec![Action::zero()],
            poses: vec![Pose::default()],
            target_frontier: Some(Frontier {
                cells: vec![(0, 0); size],
                centroid: Vec2::default(),
                size,
            }),
            path_cost: cost,
        }
    }

    #[test]
    fn base_score_examples() {
        let p = BaseScoreParams::default();
        assert!(base_score(&frontier_cand(10, 2.0), &p, false) > base_score(&frontier_cand(10, 4.0), &p, false));
        let rot = rotation_candidate(&Pose::default(), 0.5, 4, &PlatformLimits::default());
        assert_eq!(base_score(&rot, &p, false), p.b_rot);
        let s1 = base_score(&frontier_cand(7, 3.0), &p, false);
        let s2 = base_score(&frontier_cand(7, 6.0), &p, false);
        assert!((s1 - s2 - p.w_dist * 3.0).abs() < 1e-12);
        let stop = stop_candidate(&Pose::default());
        assert_eq!(base_score(&stop, &p, false), f64::NEG_INFINITY);
        assert_eq!(base_score(&stop, &p, true), p.stop_bonus);
    }
}
