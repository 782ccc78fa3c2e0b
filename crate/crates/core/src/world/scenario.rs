//! Scenario files and procedural scenario generation.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_world, Cell, RobotPose, SemanticObject, SensorConfig, WorldError, WorldGenParams,
    WorldModel, DEFAULT_CELL_SIZE,
};
use crate::scenegraph::{GoalNodeSpec, GoalSpec};

/// Salt separating the start/goal stream from the world stream of a seed.
const SCENARIO_SALT: u64 = 0x5ce7_a210_0000_0001;

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub width: i32,
    pub height: i32,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub objects: Vec<SemanticObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// `[x, y, heading]`
    pub start: [f64; 3],
}

/// On-disk scenario: world layout, robot start, sensor and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub world: WorldSpec,
    pub robot: RobotSpec,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub seed: u64,
}

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: WorldModel,
    pub start: RobotPose,
    pub sensor: SensorConfig,
    pub seed: u64,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        serde_json::from_str(text).map_err(|e| WorldError::MalformedScenario(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn build(&self) -> Result<Scenario, WorldError> {
        let s = &self.sensor;
        if !(s.range > 0.0 && s.fov > 0.0 && s.fov <= 2.0 * PI && s.noise_std >= 0.0) {
            return Err(WorldError::MalformedScenario(format!(
                "sensor range/fov/noise out of range: {s:?}"
            )));
        }
        let walls: BTreeSet<Cell> = self.world.walls.iter().copied().collect();
        let world = WorldModel::new(
            self.world.width,
            self.world.height,
            self.world.cell_size,
            walls,
            self.world.objects.clone(),
            self.seed,
        )?;
        let [x, y, heading] = self.robot.start;
        let start = RobotPose::new(x, y, heading);
        if !world.is_valid_pose(&start) {
            return Err(WorldError::MalformedScenario(format!(
                "robot start ({x}, {y}) is not on a free cell"
            )));
        }
        Ok(Scenario {
            world,
            start,
            sensor: *s,
            seed: self.seed,
        })
    }

    pub fn from_world(world: &WorldModel, start: &RobotPose, sensor: SensorConfig) -> Self {
        Self {
            world: WorldSpec {
                width: world.width(),
                height: world.height(),
                cell_size: world.cell_size(),
                walls: world.walls().iter().copied().collect(),
                objects: world.objects().to_vec(),
            },
            robot: RobotSpec {
                start: [start.x, start.y, start.heading],
            },
            sensor,
            seed: world.seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub world: WorldGenParams,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Chance that the goal also names a nearby object and their relation.
    pub relation_probability: f64,
    pub d_near: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            world: WorldGenParams::default(),
            min_objects: 8,
            max_objects: 12,
            relation_probability: 0.5,
            d_near: crate::scenegraph::DEFAULT_D_NEAR,
        }
    }
}

/// Uniformly random start on a free cell center that holds no object.
pub fn random_start(world: &WorldModel, rng: &mut impl Rng) -> Option<RobotPose> {
    let occupied: BTreeSet<Cell> = world
        .objects()
        .iter()
        .filter_map(|o| world.cell_of(o.position[0], o.position[1]))
        .collect();
    let cells: Vec<Cell> = world
        .free_cells()
        .filter(|c| !occupied.contains(c))
        .collect();
    let c = cells.choose(rng)?;
    let p = world.cell_center(*c);
    let heading = rng.gen_range(-PI..PI);
    Some(RobotPose::new(p.x, p.y, heading))
}

/// Generates a world, a robot start and a goal naming one of its objects.
///
/// The goal target carries every attribute of the chosen object. When a
/// relation is drawn, the nearest other object within `d_near` becomes a
/// second goal node; both carry prior positions relative to the target.
pub fn generate_scenario(
    seed: u64,
    params: &ScenarioParams,
) -> Result<(ScenarioFile, GoalSpec), WorldError> {
    if params.min_objects == 0 || params.min_objects > params.max_objects {
        return Err(WorldError::InvalidParameter(format!(
            "object count range {}..={} is empty",
            params.min_objects, params.max_objects
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SCENARIO_SALT);
    let n_objects = rng.gen_range(params.min_objects..=params.max_objects);
    let world = generate_world(
        seed,
        &WorldGenParams {
            n_objects,
            ..params.world.clone()
        },
    )?;
    let start = random_start(&world, &mut rng)
        .ok_or_else(|| WorldError::InfeasibleWorld("no free start cell".into()))?;

    let objects = world.objects();
    let target = &objects[rng.gen_range(0..objects.len())];
    let tp = target.position;
    let mut nodes = vec![GoalNodeSpec {
        id: 0,
        category: Some(target.category.clone()),
        attributes: target.attributes.iter().cloned().collect(),
        position: Some([0.0, 0.0]),
        target: true,
    }];
    let mut edges = Vec::new();
    let dist = |o: &SemanticObject| {
        ((o.position[0] - tp[0]).powi(2) + (o.position[1] - tp[1]).powi(2)).sqrt()
    };
    let neighbor = objects
        .iter()
        .filter(|o| o.id != target.id && dist(o) < params.d_near)
        .min_by(|a, b| dist(a).total_cmp(&dist(b)).then(a.id.cmp(&b.id)));
    if let Some(n) = neighbor.filter(|_| rng.gen_bool(params.relation_probability)) {
        nodes.push(GoalNodeSpec {
            id: 1,
            category: Some(n.category.clone()),
            attributes: n.attributes.iter().cloned().collect(),
            position: Some([n.position[0] - tp[0], n.position[1] - tp[1]]),
            target: false,
        });
        edges.push([0, 1]);
    }

    let file = ScenarioFile::from_world(&world, &start, SensorConfig::default());
    Ok((file, GoalSpec { nodes, edges }))
}
