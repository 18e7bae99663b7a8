//! 8-connected shortest paths over the occupancy grid.
//!
//! Occupied cells are impassable. Entering a cell costs its metric step
//! length times a traversal factor: 1 for Free, `unknown_factor` for
//! Unknown, plus `wall_penalty` when the cell touches an Occupied cell.
//! Diagonal moves may not cut past an Occupied corner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, CellState, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraversalCost {
    pub unknown_factor: f64,
    pub wall_penalty: f64,
}

impl Default for TraversalCost {
    fn default() -> Self {
        Self {
            unknown_factor: 1.5,
            wall_penalty: 1.0,
        }
    }
}

const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-cell traversal factors, precomputed once per grid snapshot.
pub struct CostField<'a> {
    grid: &'a OccupancyGrid,
    factor: Vec<f64>,
}

impl<'a> CostField<'a> {
    pub fn new(grid: &'a OccupancyGrid, cost: &TraversalCost) -> Self {
        let (w, h) = (grid.width, grid.height);
        let mut factor = vec![f64::INFINITY; w * h];
        for y in 0..h {
            for x in 0..w {
                let f = match grid.state((x, y)) {
                    CellState::Occupied => continue,
                    CellState::Free => 1.0,
                    CellState::Unknown => cost.unknown_factor,
                };
                let touches_wall = MOVES.iter().any(|&(dx, dy)| {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    grid.in_bounds(nx, ny) && grid.state((nx as usize, ny as usize)) == CellState::Occupied
                });
                factor[y * w + x] = if touches_wall { f + cost.wall_penalty } else { f };
            }
        }
        Self { grid, factor }
    }

    fn passable(&self, x: i64, y: i64) -> bool {
        self.grid.in_bounds(x, y) && self.factor[y as usize * self.grid.width + x as usize].is_finite()
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = self.grid.width;
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        let res = self.grid.resolution;
        MOVES.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if !self.passable(nx, ny) {
                return None;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal && (!self.passable(x + dx, y) || !self.passable(x, y + dy)) {
                return None;
            }
            let j = ny as usize * w + nx as usize;
            let len = if diagonal { res * std::f64::consts::SQRT_2 } else { res };
            Some((j, len * self.factor[j]))
        })
    }

    fn octile(&self, a: usize, b: usize) -> f64 {
        let w = self.grid.width;
        let dx = (a % w).abs_diff(b % w) as f64;
        let dy = (a / w).abs_diff(b / w) as f64;
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        self.grid.resolution * (hi - lo + lo * std::f64::consts::SQRT_2)
    }

    fn reconstruct(&self, parent: &[usize], goal: usize) -> Vec<Cell> {
        let w = self.grid.width;
        let mut path = vec![(goal % w, goal / w)];
        let mut cur = goal;
        while parent[cur] != usize::MAX {
            cur = parent[cur];
            path.push((cur % w, cur / w));
        }
        path.reverse();
        path
    }

    /// A* from `start` to `goal`. The start cell is always enterable.
    pub fn astar(&self, start: Cell, goal: Cell) -> Option<(Vec<Cell>, f64)> {
        let w = self.grid.width;
        let (s, g) = (start.1 * w + start.0, goal.1 * w + goal.0);
        if !self.passable(goal.0 as i64, goal.1 as i64) {
            return None;
        }
        let n = self.factor.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Node {
            f: self.octile(s, g),
            h: self.octile(s, g),
            idx: s,
        });
        while let Some(Node { idx, .. }) = heap.pop() {
            if idx == g {
                return Some((self.reconstruct(&parent, g), dist[g]));
            }
            let d = dist[idx];
            for (j, c) in self.neighbors(idx) {
                let nd = d + c;
                if nd < dist[j] {
                    dist[j] = nd;
                    parent[j] = idx;
                    let h = self.octile(j, g);
                    heap.push(Node { f: nd + h, h, idx: j });
                }
            }
        }
        None
    }

    /// Single-source shortest-path tree from `start`, stopping once every
    /// cell in `targets` has been settled. Yields the same optimal costs as
    /// running [`Self::astar`] once per target.
    pub fn shortest_paths(&self, start: Cell, targets: &[Cell]) -> ShortestPaths {
        let w = self.grid.width;
        let n = self.factor.len();
        let s = start.1 * w + start.0;
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut is_target = vec![false; n];
        let mut remaining = 0usize;
        for &(x, y) in targets {
            let i = y * w + x;
            if !is_target[i] {
                is_target[i] = true;
                remaining += 1;
            }
        }
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Node { f: 0.0, h: 0.0, idx: s });
        while let Some(Node { f, idx, .. }) = heap.pop() {
            if done[idx] || f > dist[idx] {
                continue;
            }
            done[idx] = true;
            if is_target[idx] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for (j, c) in self.neighbors(idx) {
                let nd = f + c;
                if nd < dist[j] {
                    dist[j] = nd;
                    parent[j] = idx;
                    heap.push(Node { f: nd, h: 0.0, idx: j });
                }
            }
        }
        ShortestPaths {
            width: w,
            dist,
            parent,
            done,
        }
    }
}

pub struct ShortestPaths {
    width: usize,
    dist: Vec<f64>,
    parent: Vec<usize>,
    done: Vec<bool>,
}

impl ShortestPaths {
    pub fn cost(&self, c: Cell) -> Option<f64> {
        let i = c.1 * self.width + c.0;
        self.done[i].then_some(self.dist[i])
    }

    pub fn path(&self, c: Cell) -> Option<Vec<Cell>> {
        let i = c.1 * self.width + c.0;
        if !self.done[i] {
            return None;
        }
        let mut path = vec![c];
        let mut cur = i;
        while self.parent[cur] != usize::MAX {
            cur = self.parent[cur];
            path.push((cur % self.width, cur / self.width));
        }
        path.reverse();
        Some(path)
    }
}
