use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid};
use super::PlanningError;

/// Search node; `g`, `h` and `f` are in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub cell: Cell,
    pub g: f64,
    pub h: f64,
    pub f: f64,
}

impl PlanNode {
    pub fn new(cell: Cell, g: f64, h: f64) -> Self {
        Self { cell, g, h, f: g + h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    /// Meters.
    pub cost: f64,
}

/// Octile distance between cells, in meters.
pub fn octile(a: Cell, b: Cell, resolution: f64) -> f64 {
    let dx = a.0.abs_diff(b.0) as f64;
    let dy = a.1.abs_diff(b.1) as f64;
    (dx.max(dy) - dx.min(dy) + SQRT_2 * dx.min(dy)) * resolution
}

/// Step costs are tracked as (cardinal, diagonal) counts so that equal paths
/// compare equal bit for bit.
fn step_cost(counts: (u32, u32), resolution: f64) -> f64 {
    (counts.0 as f64 + SQRT_2 * counts.1 as f64) * resolution
}

struct Entry {
    node: PlanNode,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // max-heap: lower f first, then higher g, then lower row-major index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .f
            .total_cmp(&self.node.f)
            .then(self.node.g.total_cmp(&other.node.g))
            .then(other.index.cmp(&self.index))
    }
}

/// 8-connected neighbours; a diagonal move needs both adjacent cardinal cells free.
pub fn neighbors(grid: &OccupancyGrid, cell: Cell, occupied_threshold: f64) -> Vec<(Cell, bool)> {
    let free = |c: isize, r: isize| {
        c >= 0
            && r >= 0
            && (c as usize) < grid.width()
            && (r as usize) < grid.height()
            && grid.get((c as usize, r as usize)) < occupied_threshold
    };
    let (c, r) = (cell.0 as isize, cell.1 as isize);
    let mut out = Vec::with_capacity(8);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if (dc, dr) == (0, 0) || !free(c + dc, r + dr) {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            if diagonal && !(free(c + dc, r) && free(c, r + dr)) {
                continue;
            }
            out.push((((c + dc) as usize, (r + dr) as usize), diagonal));
        }
    }
    out
}

pub fn astar(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    occupied_threshold: f64,
) -> Result<GridPath, PlanningError> {
    for (name, cell) in [("start", start), ("goal", goal)] {
        if !grid.in_bounds(cell) {
            return Err(PlanningError::InvalidEndpoint(format!("{name} {cell:?} outside grid")));
        }
        if grid.get(cell) >= occupied_threshold {
            return Err(PlanningError::InvalidEndpoint(format!("{name} {cell:?} is occupied")));
        }
    }
    let res = grid.resolution();
    let n = grid.width() * grid.height();
    let mut counts: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut parent: Vec<usize> = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let si = grid.index(start);
    counts[si] = Some((0, 0));
    open.push(Entry {
        node: PlanNode::new(start, 0.0, octile(start, goal, res)),
        index: si,
    });

    while let Some(Entry { node, index }) = open.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if node.cell == goal {
            let mut cells = vec![goal];
            let mut i = index;
            while parent[i] != usize::MAX {
                i = parent[i];
                cells.push((i % grid.width(), i / grid.width()));
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: node.g });
        }
        let here = counts[index].expect("closed node has a cost");
        for (next, diagonal) in neighbors(grid, node.cell, occupied_threshold) {
            let ni = grid.index(next);
            if closed[ni] {
                continue;
            }
            let cand = if diagonal {
                (here.0, here.1 + 1)
            } else {
                (here.0 + 1, here.1)
            };
            let g = step_cost(cand, res);
            if counts[ni].is_some_and(|old| step_cost(old, res) <= g) {
                continue;
            }
            counts[ni] = Some(cand);
            parent[ni] = index;
            open.push(Entry {
                node: PlanNode::new(next, g, octile(next, goal, res)),
                index: ni,
            });
        }
    }
    Err(PlanningError::NoPath)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_is_goal() {
        let g = OccupancyGrid::new(5, 5, 0.1).unwrap();
        let p = astar(&g, (2, 2), (2, 2), 0.5).unwrap();
        assert_eq!(p.cells, vec![(2, 2)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn pure_diagonal() {
        let g = OccupancyGrid::new(10, 10, 0.1).unwrap();
        let p = astar(&g, (0, 0), (9, 9), 0.5).unwrap();
        assert_eq!(p.cost, 9.0 * SQRT_2 * 0.1);
        assert_eq!(p.cells.len(), 10);
    }

    #[test]
    fn endpoints_and_no_path() {
        let mut g = OccupancyGrid::new(5, 5, 1.0).unwrap();
        for r in 0..5 {
            g.set((2, r), 1.0);
        }
        assert_eq!(astar(&g, (0, 0), (4, 4), 0.5), Err(PlanningError::NoPath));
        assert!(matches!(
            astar(&g, (2, 0), (4, 4), 0.5),
            Err(PlanningError::InvalidEndpoint(_))
        ));
        assert!(matches!(
            astar(&g, (0, 0), (5, 0), 0.5),
            Err(PlanningError::InvalidEndpoint(_))
        ));
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = OccupancyGrid::new(2, 2, 1.0).unwrap();
        g.set((1, 0), 1.0);
        g.set((0, 1), 1.0);
        assert_eq!(astar(&g, (0, 0), (1, 1), 0.5), Err(PlanningError::NoPath));
        g.set((0, 1), 0.0);
        let p = astar(&g, (0, 0), (1, 1), 0.5).unwrap();
        assert_eq!(p.cells, vec![(0, 0), (0, 1), (1, 1)]);
        assert_eq!(p.cost, 2.0);
    }

    #[test]
    fn node_f_is_sum() {
        let n = PlanNode::new((1, 2), 0.3, 0.7);
        assert_eq!(n.f, 0.3 + 0.7);
    }

    #[test]
    fn octile_examples() {
        assert_eq!(octile((0, 0), (3, 0), 1.0), 3.0);
        assert_eq!(octile((0, 0), (2, 2), 0.5), SQRT_2);
        assert!((octile((0, 0), (4, 1), 1.0) - (3.0 + SQRT_2)).abs() < 1e-15);
    }
}
