//! The robot's own occupancy knowledge, frontier extraction and grid search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::wrap_angle;
use crate::world::{bresenham, Cell, Observation, RobotPose, SensorConfig, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: i32,
    height: i32,
    cell_size: f64,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(width: i32, height: i32, cell_size: f64) -> Self {
        Self {
            width,
            height,
            cell_size,
            cells: vec![CellState::Unknown; (width.max(0) * height.max(0)) as usize],
        }
    }

    /// Ground-truth grid of a world (no unknown cells).
    pub fn from_world(world: &WorldModel) -> Self {
        let mut g = Self::new(world.width(), world.height(), world.cell_size());
        for y in 0..world.height() {
            for x in 0..world.width() {
                let c = Cell::new(x, y);
                let s = if world.is_wall(c) {
                    CellState::Occupied
                } else {
                    CellState::Free
                };
                g.set(c, s);
            }
        }
        g
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn idx(&self, c: Cell) -> usize {
        (c.y * self.width + c.x) as usize
    }

    /// Out-of-bounds cells read as occupied.
    pub fn get(&self, c: Cell) -> CellState {
        if self.in_bounds(c) {
            self.cells[self.idx(c)]
        } else {
            CellState::Occupied
        }
    }

    pub fn set(&mut self, c: Cell, s: CellState) {
        if self.in_bounds(c) {
            let i = self.idx(c);
            self.cells[i] = s;
        }
    }

    pub fn integrate(&mut self, obs: &Observation) {
        for c in &obs.free_cells {
            self.set(*c, CellState::Free);
        }
        for c in &obs.occupied_cells {
            self.set(*c, CellState::Occupied);
        }
    }

    /// Like [`integrate`](Self::integrate), but a sensed free cell only
    /// becomes known once its center lies inside the sensing cone and the
    /// direct ray to it is clear, so no object can sit unseen in a known
    /// cell. The robot's own cell is always known.
    pub fn integrate_viewed(&mut self, obs: &Observation, pose: &RobotPose, sensor: &SensorConfig) {
        let origin = pose.position();
        let own = self.cell_of(pose.x, pose.y);
        for c in &obs.free_cells {
            let d = self.cell_center(*c) - origin;
            let dist = d.norm();
            let viewed = dist <= sensor.range
                && (dist == 0.0
                    || wrap_angle(d.y.atan2(d.x) - pose.heading).abs() <= 0.5 * sensor.fov);
            let direct =
                || own.is_some_and(|o| bresenham(o, *c).iter().all(|r| obs.free_cells.contains(r)));
            if own == Some(*c) || (viewed && direct()) {
                self.set(*c, CellState::Free);
            }
        }
        for c in &obs.occupied_cells {
            self.set(*c, CellState::Occupied);
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return None;
        }
        let c = Cell::new(
            (x / self.cell_size).floor() as i32,
            (y / self.cell_size).floor() as i32,
        );
        self.in_bounds(c).then_some(c)
    }

    pub fn cell_center(&self, c: Cell) -> Vector2<f64> {
        Vector2::new(
            (c.x as f64 + 0.5) * self.cell_size,
            (c.y as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).map(move |x| {
                let c = Cell::new(x, y);
                (c, self.get(c))
            })
        })
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|c| **c == s).count()
    }

    /// Whether every point of the segment `a -> b` (sampled at `step`
    /// meters) falls in a cell accepted by `passable`.
    pub fn segment_clear(
        &self,
        a: Vector2<f64>,
        b: Vector2<f64>,
        step: f64,
        passable: impl Fn(CellState) -> bool,
    ) -> bool {
        let len = (b - a).norm();
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n).all(|k| {
            let p = a + (b - a) * (k as f64 / n as f64);
            self.cell_of(p.x, p.y)
                .is_some_and(|c| passable(self.get(c)))
        })
    }
}

/// Known-free cells with at least one unknown 4-neighbor, in row-major order.
pub fn frontiers(grid: &OccupancyGrid) -> Vec<Cell> {
    grid.cells()
        .filter(|(c, s)| {
            *s == CellState::Free
                && c.neighbors4()
                    .iter()
                    .any(|n| grid.in_bounds(*n) && grid.get(*n) == CellState::Unknown)
        })
        .map(|(c, _)| c)
        .collect()
}

const NEIGHBORS8: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    priority: f64,
    order: u64,
    index: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then(other.order.cmp(&self.order))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree over an 8-connected grid. Diagonal moves may not cut
/// a blocked corner.
#[derive(Debug, Clone)]
pub struct PathField {
    width: i32,
    dist: Vec<f64>,
    parent: Vec<Option<usize>>,
}

impl PathField {
    pub fn distance(&self, c: Cell) -> Option<f64> {
        if c.x < 0 || c.y < 0 || c.x >= self.width {
            return None;
        }
        let i = (c.y * self.width + c.x) as usize;
        self.dist.get(i).copied().filter(|d| d.is_finite())
    }

    /// Cells from the search origin to `goal`, both included.
    pub fn path_to(&self, goal: Cell) -> Option<Vec<Cell>> {
        self.distance(goal)?;
        let w = self.width;
        let mut i = (goal.y * w + goal.x) as usize;
        let mut out = vec![goal];
        while let Some(p) = self.parent[i] {
            out.push(Cell::new(p as i32 % w, p as i32 / w));
            i = p;
        }
        out.reverse();
        Some(out)
    }
}

fn search(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Option<Cell>,
    passable: &dyn Fn(CellState) -> bool,
) -> PathField {
    let n = (grid.width * grid.height) as usize;
    let mut field = PathField {
        width: grid.width,
        dist: vec![f64::INFINITY; n],
        parent: vec![None; n],
    };
    if !grid.in_bounds(start) || !passable(grid.get(start)) {
        return field;
    }
    let cs = grid.cell_size;
    let heuristic = |c: Cell| match goal {
        Some(g) => {
            let dx = (c.x - g.x).abs() as f64;
            let dy = (c.y - g.y).abs() as f64;
            cs * (dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy))
        }
        None => 0.0,
    };
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    let si = grid.idx(start);
    field.dist[si] = 0.0;
    heap.push(QueueEntry {
        priority: heuristic(start),
        order,
        index: si,
    });
    while let Some(QueueEntry { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let c = Cell::new(index as i32 % grid.width, index as i32 / grid.width);
        if Some(c) == goal {
            break;
        }
        for (dx, dy) in NEIGHBORS8 {
            let nb = Cell::new(c.x + dx, c.y + dy);
            if !grid.in_bounds(nb) || !passable(grid.get(nb)) {
                continue;
            }
            if dx != 0
                && dy != 0
                && (!passable(grid.get(Cell::new(c.x + dx, c.y)))
                    || !passable(grid.get(Cell::new(c.x, c.y + dy))))
            {
                continue;
            }
            let step = if dx != 0 && dy != 0 {
                cs * std::f64::consts::SQRT_2
            } else {
                cs
            };
            let ni = grid.idx(nb);
            let nd = field.dist[index] + step;
            if nd < field.dist[ni] {
                field.dist[ni] = nd;
                field.parent[ni] = Some(index);
                order += 1;
                heap.push(QueueEntry {
                    priority: nd + heuristic(nb),
                    order,
                    index: ni,
                });
            }
        }
    }
    field
}

/// Dijkstra distances from `start` to every cell accepted by `passable`.
pub fn distance_field(
    grid: &OccupancyGrid,
    start: Cell,
    passable: impl Fn(CellState) -> bool,
) -> PathField {
    search(grid, start, None, &passable)
}

/// A* shortest path (meters, cell-center metric) from `start` to `goal`.
pub fn astar(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    passable: impl Fn(CellState) -> bool,
) -> Option<(Vec<Cell>, f64)> {
    let field = search(grid, start, Some(goal), &passable);
    let d = field.distance(goal)?;
    Some((field.path_to(goal)?, d))
}

pub fn free_only(s: CellState) -> bool {
    s == CellState::Free
}

pub fn not_occupied(s: CellState) -> bool {
    s != CellState::Occupied
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn fully_known_has_no_frontiers() {
        let world = WorldModel::new(6, 6, 0.25, BTreeSet::new(), vec![], 0).unwrap();
        assert!(frontiers(&OccupancyGrid::from_world(&world)).is_empty());
    }

    #[test]
    fn half_known_frontier_is_boundary_column() {
        let mut g = OccupancyGrid::new(8, 5, 0.25);
        for y in 0..5 {
            for x in 0..4 {
                g.set(Cell::new(x, y), CellState::Free);
            }
        }
        let f = frontiers(&g);
        assert_eq!(f, (0..5).map(|y| Cell::new(3, y)).collect::<Vec<_>>());
    }

    #[test]
    fn astar_straight_and_diagonal() {
        let world = WorldModel::new(6, 6, 0.25, BTreeSet::new(), vec![], 0).unwrap();
        let g = OccupancyGrid::from_world(&world);
        let (path, d) = astar(&g, Cell::new(0, 0), Cell::new(4, 0), free_only).unwrap();
        assert_eq!(path.len(), 5);
        assert!((d - 1.0).abs() < 1e-12);
        let (_, d) = astar(&g, Cell::new(0, 0), Cell::new(3, 3), free_only).unwrap();
        assert!((d - 0.75 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn astar_respects_walls_and_corners() {
        // wall column with a gap at the top
        let walls: BTreeSet<Cell> = (0..5).map(|y| Cell::new(2, y)).collect();
        let world = WorldModel::new(6, 6, 1.0, walls, vec![], 0).unwrap();
        let g = OccupancyGrid::from_world(&world);
        let (path, _) = astar(&g, Cell::new(0, 0), Cell::new(4, 0), free_only).unwrap();
        assert!(path.iter().all(|c| !world.is_wall(*c)));
        assert!(path.contains(&Cell::new(2, 5)));
        // a diagonal-only gap is not passable
        let walls = BTreeSet::from([Cell::new(1, 0), Cell::new(0, 1)]);
        let world = WorldModel::new(4, 4, 1.0, walls, vec![], 0).unwrap();
        let g = OccupancyGrid::from_world(&world);
        assert!(astar(&g, Cell::new(0, 0), Cell::new(3, 3), free_only).is_none());
    }

    #[test]
    fn astar_agrees_with_dijkstra() {
        let world = crate::world::generate_world(5, &Default::default()).unwrap();
        let g = OccupancyGrid::from_world(&world);
        let start = world.free_cells().next().unwrap();
        let field = distance_field(&g, start, free_only);
        for goal in world.free_cells().step_by(7) {
            let a = astar(&g, start, goal, free_only).map(|(_, d)| d);
            let b = field.distance(goal);
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                other => panic!("disagreement {other:?}"),
            }
        }
    }
}
