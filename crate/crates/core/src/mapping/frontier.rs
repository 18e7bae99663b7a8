use crate::geometry::Vec2;

use super::grid::{Cell, CellState, OccupancyGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct Frontier {
    pub cells: Vec<Cell>,
    pub centroid: Vec2,
    pub size: usize,
}

pub const DEFAULT_MIN_FRONTIER_CELLS: usize = 3;

const N4: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

pub fn is_frontier_cell(grid: &OccupancyGrid, c: Cell) -> bool {
    if grid.state(c) != CellState::Free {
        return false;
    }
    N4.iter().any(|&(dx, dy)| {
        let (x, y) = (c.0 as i64 + dx, c.1 as i64 + dy);
        grid.in_bounds(x, y) && grid.state((x as usize, y as usize)) == CellState::Unknown
    })
}

/// Maximal 8-connected groups of frontier cells with at least `min_cells`
/// members, ordered by size (descending) then centroid (x, then y).
pub fn extract_frontiers(grid: &OccupancyGrid, min_cells: usize) -> Vec<Frontier> {
    let (w, h) = (grid.width, grid.height);
    let mut is_frontier = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            is_frontier[y * w + x] = is_frontier_cell(grid, (x, y));
        }
    }
    let mut visited = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !is_frontier[i] || visited[i] {
                continue;
            }
            visited[i] = true;
            stack.push((x, y));
            let mut cells = Vec::new();
            while let Some(c) = stack.pop() {
                cells.push(c);
                for &(dx, dy) in &N8 {
                    let (nx, ny) = (c.0 as i64 + dx, c.1 as i64 + dy);
                    if !grid.in_bounds(nx, ny) {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if is_frontier[j] && !visited[j] {
                        visited[j] = true;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
            if cells.len() < min_cells {
                continue;
            }
            cells.sort_unstable_by_key(|&(x, y)| (y, x));
            let n = cells.len() as f64;
            let sum = cells
                .iter()
                .fold(Vec2::default(), |acc, &c| acc + grid.cell_center(c));
            out.push(Frontier {
                size: cells.len(),
                centroid: sum * (1.0 / n),
                cells,
            });
        }
    }
    out.sort_by(|a, b| {
        b.size
            .cmp(&a.size)
            .then(a.centroid.x.total_cmp(&b.centroid.x))
            .then(a.centroid.y.total_cmp(&b.centroid.y))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 20x20 grid: a free room (x,y in 5..15) enclosed by occupied walls,
    /// optionally with a 3-cell doorway in the east wall.
    fn room(doorway: bool) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.15, Vec2::new(0.0, 0.0), 20, 20);
        for y in 4..=15 {
            for x in 4..=15 {
                let wall = x == 4 || x == 15 || y == 4 || y == 15;
                g.set_state((x, y), if wall { CellState::Occupied } else { CellState::Free });
            }
        }
        if doorway {
            for y in 9..=11 {
                g.set_state((15, y), CellState::Free);
            }
        }
        g
    }

    #[test]
    fn unknown_grid_has_no_frontiers() {
        let g = OccupancyGrid::new(0.15, Vec2::new(0.0, 0.0), 10, 10);
        assert!(extract_frontiers(&g, 1).is_empty());
    }

    #[test]
    fn closed_room_has_no_frontiers() {
        assert!(extract_frontiers(&room(false), 1).is_empty());
    }

    #[test]
    fn doorway_gives_one_frontier() {
        let g = room(true);
        let f = extract_frontiers(&g, 3);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].size, 3);
        assert_eq!(f[0].cells, vec![(15, 9), (15, 10), (15, 11)]);
        let c = g.cell_center((15, 10));
        assert!((f[0].centroid.x - c.x).abs() < 1e-12 && (f[0].centroid.y - c.y).abs() < 1e-12);
    }

    #[test]
    fn small_frontiers_are_filtered_and_order_is_stable() {
        let mut g = room(true);
        // a second, single-cell opening in the west wall
        g.set_state((4, 7), CellState::Free);
        assert_eq!(extract_frontiers(&g, 3).len(), 1);
        let all = extract_frontiers(&g, 1);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].size, 3);
        assert_eq!(all[1].size, 1);
    }
}
