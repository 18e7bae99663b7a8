//! Exact shortest-path distances in a wall scene via a visibility graph.
//!
//! Nodes sit just off every wall endpoint, one in each diagonal direction,
//! so that shortest paths can bend around corners without slipping through
//! junctions where walls meet. Landmark discs are ignored.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec2;

use super::Scene;

const CORNER_OFFSET: f64 = 1e-3;

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed segment intersection test (touching counts).
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distance-to-goal field over a fixed scene.
#[derive(Debug, Clone)]
pub struct GeodesicField {
    walls: Vec<(Vec2, Vec2)>,
    goal: Vec2,
    nodes: Vec<Vec2>,
    to_goal: Vec<f64>,
}

impl GeodesicField {
    pub fn new(scene: &Scene, goal: Vec2) -> Self {
        let walls: Vec<(Vec2, Vec2)> = scene.walls.iter().map(|w| (w.a, w.b)).collect();
        let mut nodes: Vec<Vec2> = Vec::new();
        for &(a, b) in &walls {
            for p in [a, b] {
                for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let n = Vec2::new(p.x + sx * CORNER_OFFSET, p.y + sy * CORNER_OFFSET);
                    if !scene.contains(n) {
                        continue;
                    }
                    if nodes.iter().any(|m| m.distance(n) < 1e-9) {
                        continue;
                    }
                    if walls
                        .iter()
                        .any(|&(wa, wb)| super::point_segment_distance(n, wa, wb) < 1e-9)
                    {
                        continue;
                    }
                    nodes.push(n);
                }
            }
        }

        let mut field = Self {
            walls,
            goal,
            nodes,
            to_goal: Vec::new(),
        };
        field.to_goal = field.dijkstra_from_goal();
        field
    }

    fn visible(&self, p: Vec2, q: Vec2) -> bool {
        !self.walls.iter().any(|&(a, b)| segments_intersect(p, q, a, b))
    }

    fn dijkstra_from_goal(&self) -> Vec<f64> {
        let n = self.nodes.len();
        // adjacency via lazily evaluated visibility; graph is small
        let mut vis = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.visible(self.nodes[i], self.nodes[j]);
                vis[i * n + j] = v;
                vis[j * n + i] = v;
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        for (i, &node) in self.nodes.iter().enumerate() {
            if self.visible(node, self.goal) {
                dist[i] = node.distance(self.goal);
                heap.push(HeapItem { dist: dist[i], node: i });
            }
        }
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for v in 0..n {
                if vis[u * n + v] {
                    let nd = d + self.nodes[u].distance(self.nodes[v]);
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(HeapItem { dist: nd, node: v });
                    }
                }
            }
        }
        dist
    }

    pub fn goal(&self) -> Vec2 {
        self.goal
    }

    /// Shortest collision-free distance from `p` to the goal; infinite when
    /// the goal is unreachable.
    pub fn distance(&self, p: Vec2) -> f64 {
        if self.visible(p, self.goal) {
            return p.distance(self.goal);
        }
        self.nodes
            .iter()
            .zip(&self.to_goal)
            .filter(|(_, d)| d.is_finite())
            .filter(|(&n, _)| self.visible(p, n))
            .map(|(&n, &d)| p.distance(n) + d)
            .fold(f64::INFINITY, f64::min)
    }
}
