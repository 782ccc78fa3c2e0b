//! Grid world with walls and semantic objects, unicycle robot kinematics and
//! a field-of-view raycast sensor.
//!
//! World coordinates are meters with the origin at the lower-left corner of
//! cell `(0, 0)`; cell `(x, y)` covers `[x*cs, (x+1)*cs) x [y*cs, (y+1)*cs)`.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_angle;

mod scenario;
pub use scenario::{
    generate_scenario, random_start, RobotSpec, Scenario, ScenarioFile, ScenarioParams, WorldSpec,
};

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
const MAX_CARVE_ATTEMPTS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("world must be at least 4x4 cells, got {0}x{1}")]
    TooSmall(i32, i32),
    #[error("cell ({0}, {1}) is outside the world")]
    OutOfBounds(i32, i32),
    #[error("object {0} does not lie on a free cell")]
    ObjectNotOnFreeCell(u32),
    #[error("duplicate object id {0}")]
    DuplicateObjectId(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible world: {0}")]
    InfeasibleWorld(String),
    #[error("malformed scenario: {0}")]
    MalformedScenario(String),
}

/// Grid cell index. Ordered row-major (by `y`, then `x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x, self.y + 1),
            Cell::new(self.x, self.y - 1),
        ]
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

/// All cells on the Bresenham line from `a` to `b`, both ends included.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = (a.x, a.y);
    let dx = (b.x - a.x).abs();
    let dy = -(b.y - a.y).abs();
    let sx = if a.x < b.x { 1 } else { -1 };
    let sy = if a.y < b.y { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push(Cell::new(x, y));
        if x == b.x && y == b.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticObject {
    pub id: u32,
    pub category: String,
    pub attributes: BTreeSet<String>,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Unicycle kinematics with midpoint heading integration. Ignores walls.
pub fn step_unicycle(pose: &RobotPose, cmd: VelocityCommand, dt: f64) -> RobotPose {
    let mid = pose.heading + 0.5 * cmd.omega * dt;
    let dist = cmd.v * dt;
    RobotPose {
        x: pose.x + dist * mid.cos(),
        y: pose.y + dist * mid.sin(),
        heading: wrap_angle(pose.heading + cmd.omega * dt),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub range: f64,
    pub fov: f64,
    /// Standard deviation of Gaussian noise on measured object positions.
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range: 5.0,
            fov: PI / 2.0,
            noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedObject {
    pub id: u32,
    pub category: String,
    pub attributes: BTreeSet<String>,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub visible_objects: Vec<ObservedObject>,
    pub free_cells: BTreeSet<Cell>,
    pub occupied_cells: BTreeSet<Cell>,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    width: i32,
    height: i32,
    cell_size: f64,
    walls: BTreeSet<Cell>,
    objects: Vec<SemanticObject>,
    seed: u64,
    occupancy: Vec<bool>,
}

impl WorldModel {
    pub fn new(
        width: i32,
        height: i32,
        cell_size: f64,
        walls: BTreeSet<Cell>,
        objects: Vec<SemanticObject>,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if width < 4 || height < 4 {
            return Err(WorldError::TooSmall(width, height));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(WorldError::InvalidParameter(format!(
                "cell_size must be positive, got {cell_size}"
            )));
        }
        let mut occupancy = vec![false; (width * height) as usize];
        for c in &walls {
            if c.x < 0 || c.y < 0 || c.x >= width || c.y >= height {
                return Err(WorldError::OutOfBounds(c.x, c.y));
            }
            occupancy[(c.y * width + c.x) as usize] = true;
        }
        let world = Self {
            width,
            height,
            cell_size,
            walls,
            objects,
            seed,
            occupancy,
        };
        let mut ids = BTreeSet::new();
        for o in &world.objects {
            if !ids.insert(o.id) {
                return Err(WorldError::DuplicateObjectId(o.id));
            }
            match world.cell_of(o.position[0], o.position[1]) {
                Some(c) if !world.is_wall(c) => {}
                _ => return Err(WorldError::ObjectNotOnFreeCell(o.id)),
            }
        }
        Ok(world)
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

    pub fn walls(&self) -> &BTreeSet<Cell> {
        &self.walls
    }

    pub fn objects(&self) -> &[SemanticObject] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> Option<&SemanticObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.occupancy[(c.y * self.width + c.x) as usize]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.occupancy[(c.y * self.width + c.x) as usize]
    }

    /// Cell containing a metric point, `None` outside the world.
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

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| Cell::new(x, y)))
            .filter(|c| self.is_free(*c))
    }

    pub fn is_valid_pose(&self, pose: &RobotPose) -> bool {
        pose.heading.is_finite()
            && self
                .cell_of(pose.x, pose.y)
                .is_some_and(|c| !self.is_wall(c))
    }

    /// Unicycle step that refuses to enter walls or leave the world. A
    /// blocked step keeps the position but still applies the rotation.
    pub fn step_unicycle(&self, pose: &RobotPose, cmd: VelocityCommand, dt: f64) -> RobotPose {
        let next = step_unicycle(pose, cmd, dt);
        match self.cell_of(next.x, next.y) {
            Some(c) if !self.is_wall(c) => next,
            _ => RobotPose {
                x: pose.x,
                y: pose.y,
                heading: next.heading,
            },
        }
    }

    /// Field-of-view scan from `pose`.
    ///
    /// An object is visible iff it lies within `range`, within half the FOV of
    /// the heading, and the Bresenham ray from the robot cell to the object
    /// cell crosses no wall. Sensed cells are every cell traversed by rays to
    /// the in-range, in-FOV cells, stopping at the first wall.
    pub fn observe(&self, pose: &RobotPose, sensor: &SensorConfig, timestamp: f64) -> Observation {
        let mut obs = Observation {
            timestamp,
            ..Default::default()
        };
        let Some(rc) = self.cell_of(pose.x, pose.y) else {
            return obs;
        };
        let origin = pose.position();
        let half_fov = 0.5 * sensor.fov;
        let in_cone = |p: Vector2<f64>| -> bool {
            let d = p - origin;
            let dist = d.norm();
            if dist > sensor.range {
                return false;
            }
            dist == 0.0 || wrap_angle(d.y.atan2(d.x) - pose.heading).abs() <= half_fov
        };

        obs.free_cells.insert(rc);
        let reach = (sensor.range / self.cell_size).ceil() as i32 + 1;
        for y in (rc.y - reach).max(0)..=(rc.y + reach).min(self.height - 1) {
            for x in (rc.x - reach).max(0)..=(rc.x + reach).min(self.width - 1) {
                let c = Cell::new(x, y);
                if c == rc || !in_cone(self.cell_center(c)) {
                    continue;
                }
                for cell in bresenham(rc, c) {
                    if self.is_wall(cell) {
                        obs.occupied_cells.insert(cell);
                        break;
                    }
                    obs.free_cells.insert(cell);
                }
            }
        }

        for o in &self.objects {
            let p = Vector2::new(o.position[0], o.position[1]);
            if !in_cone(p) {
                continue;
            }
            let Some(oc) = self.cell_of(p.x, p.y) else {
                continue;
            };
            if bresenham(rc, oc).into_iter().any(|c| self.is_wall(c)) {
                continue;
            }
            let position = if sensor.noise_std > 0.0 {
                self.noisy_position(o, sensor.noise_std, timestamp)
            } else {
                o.position
            };
            obs.visible_objects.push(ObservedObject {
                id: o.id,
                category: o.category.clone(),
                attributes: o.attributes.clone(),
                position,
            });
        }
        obs
    }

    fn noisy_position(&self, o: &SemanticObject, std: f64, timestamp: f64) -> [f64; 2] {
        let stream = timestamp.to_bits() ^ ((o.id as u64) << 32);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ stream.rotate_left(17));
        let normal = Normal::new(0.0, std).expect("noise std is finite and positive");
        [
            o.position[0] + normal.sample(&mut rng),
            o.position[1] + normal.sample(&mut rng),
        ]
    }

    /// 4-connected BFS distances (in cells) over free cells from `start`.
    pub fn bfs_reachable(&self, start: Cell) -> HashMap<Cell, u32> {
        let mut dist = HashMap::new();
        if !self.is_free(start) {
            return dist;
        }
        let mut queue = VecDeque::from([start]);
        dist.insert(start, 0);
        while let Some(c) = queue.pop_front() {
            let d = dist[&c];
            for n in c.neighbors4() {
                if self.is_free(n) && !dist.contains_key(&n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldGenParams {
    pub width: i32,
    pub height: i32,
    pub cell_size: f64,
    pub n_objects: usize,
    pub wall_density: f64,
    pub categories: Vec<String>,
    pub attributes: Vec<String>,
    pub max_attributes: usize,
    /// Minimum center distance between generated objects, meters.
    pub min_object_spacing: f64,
}

impl Default for WorldGenParams {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Self {
            width: 20,
            height: 20,
            cell_size: DEFAULT_CELL_SIZE,
            n_objects: 10,
            wall_density: 0.1,
            categories: s(&[
                "chair", "table", "sofa", "person", "plant", "cabinet", "bin", "shelf",
            ]),
            attributes: s(&[
                "black", "white", "red", "blue", "wooden", "office", "tall", "small",
            ]),
            max_attributes: 2,
            min_object_spacing: 0.75,
        }
    }
}

/// Procedural cluttered world. Deterministic in `seed`; every free cell is
/// 4-connected to every other (isolated pockets are carved open).
pub fn generate_world(seed: u64, params: &WorldGenParams) -> Result<WorldModel, WorldError> {
    if params.n_objects == 0 {
        return Err(WorldError::InvalidParameter(
            "n_objects must be >= 1".into(),
        ));
    }
    if !(0.0..=0.3).contains(&params.wall_density) {
        return Err(WorldError::InvalidParameter(format!(
            "wall_density must lie in [0, 0.3], got {}",
            params.wall_density
        )));
    }
    if params.categories.is_empty() {
        return Err(WorldError::InvalidParameter(
            "empty category vocabulary".into(),
        ));
    }
    if params.width < 4 || params.height < 4 {
        return Err(WorldError::TooSmall(params.width, params.height));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (params.width, params.height);

    let mut walls = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            if rng.gen::<f64>() < params.wall_density {
                walls.insert(Cell::new(x, y));
            }
        }
    }
    if walls.len() as i32 == w * h {
        walls.remove(&Cell::new(w / 2, h / 2));
    }
    carve_connectivity(w, h, &mut walls)?;

    let mut candidates: Vec<Cell> = (0..h)
        .flat_map(|y| (0..w).map(move |x| Cell::new(x, y)))
        .filter(|c| !walls.contains(c))
        .collect();
    candidates.shuffle(&mut rng);
    let center = |c: Cell| {
        Vector2::new(
            (c.x as f64 + 0.5) * params.cell_size,
            (c.y as f64 + 0.5) * params.cell_size,
        )
    };
    let mut chosen: Vec<Cell> = Vec::new();
    for c in candidates {
        if chosen.len() == params.n_objects {
            break;
        }
        if chosen
            .iter()
            .all(|o| (center(*o) - center(c)).norm() >= params.min_object_spacing)
        {
            chosen.push(c);
        }
    }
    if chosen.len() < params.n_objects {
        return Err(WorldError::InfeasibleWorld(format!(
            "could only place {} of {} objects",
            chosen.len(),
            params.n_objects
        )));
    }

    let objects = chosen
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let category = params.categories[rng.gen_range(0..params.categories.len())].clone();
            let mut attributes = BTreeSet::new();
            if !params.attributes.is_empty() && params.max_attributes > 0 {
                let k = rng.gen_range(1..=params.max_attributes.min(params.attributes.len()));
                for a in params.attributes.choose_multiple(&mut rng, k) {
                    attributes.insert(a.clone());
                }
            }
            let p = center(c);
            SemanticObject {
                id: i as u32,
                category,
                attributes,
                position: [p.x, p.y],
            }
        })
        .collect();

    WorldModel::new(w, h, params.cell_size, walls, objects, seed)
}

fn components(w: i32, h: i32, walls: &BTreeSet<Cell>) -> Vec<Vec<Cell>> {
    let mut label = vec![usize::MAX; (w * h) as usize];
    let idx = |c: Cell| (c.y * w + c.x) as usize;
    let inside = |c: Cell| c.x >= 0 && c.y >= 0 && c.x < w && c.y < h;
    let mut comps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let s = Cell::new(x, y);
            if walls.contains(&s) || label[idx(s)] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut comp = vec![s];
            label[idx(s)] = id;
            let mut i = 0;
            while i < comp.len() {
                for n in comp[i].neighbors4() {
                    if inside(n) && !walls.contains(&n) && label[idx(n)] == usize::MAX {
                        label[idx(n)] = id;
                        comp.push(n);
                    }
                }
                i += 1;
            }
            comps.push(comp);
        }
    }
    comps
}

fn carve_connectivity(w: i32, h: i32, walls: &mut BTreeSet<Cell>) -> Result<(), WorldError> {
    for _ in 0..MAX_CARVE_ATTEMPTS {
        let comps = components(w, h, walls);
        if comps.len() <= 1 {
            return Ok(());
        }
        let main = comps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("at least two components");
        let main_set: BTreeSet<Cell> = comps[main].iter().copied().collect();
        let other = if main == 0 { 1 } else { 0 };

        // Shortest 4-connected path (through walls) from the pocket to the main area.
        let mut parent: HashMap<Cell, Cell> = HashMap::new();
        let mut queue: VecDeque<Cell> = comps[other].iter().copied().collect();
        let mut seen: BTreeSet<Cell> = comps[other].iter().copied().collect();
        let mut hit = None;
        'bfs: while let Some(c) = queue.pop_front() {
            for n in c.neighbors4() {
                if n.x < 0 || n.y < 0 || n.x >= w || n.y >= h || !seen.insert(n) {
                    continue;
                }
                parent.insert(n, c);
                if main_set.contains(&n) {
                    hit = Some(n);
                    break 'bfs;
                }
                queue.push_back(n);
            }
        }
        let mut cur = hit.ok_or_else(|| WorldError::InfeasibleWorld("no carve path".into()))?;
        while let Some(p) = parent.get(&cur) {
            walls.remove(p);
            cur = *p;
        }
    }
    if components(w, h, walls).len() <= 1 {
        Ok(())
    } else {
        Err(WorldError::InfeasibleWorld(format!(
            "free space still disconnected after {MAX_CARVE_ATTEMPTS} carving attempts"
        )))
    }
}
