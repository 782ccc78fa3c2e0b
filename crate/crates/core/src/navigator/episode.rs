use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::{astar, free_only, OccupancyGrid};
use super::{
    action_to_velocity, decode_action, hold_command, stage_of, DecisionContext, DiscreteAction,
    NavConfig, NavError, Stage, TURN_RATE,
};
use crate::reasoner::Reasoner;
use crate::scenegraph::{
    align, decompose_goal, match_score, node_matches, verify_and_correct, Goal, GoalNodeSpec,
    GoalSpec, GraphNode, SemanticGraph, VerifyOutcome,
};
use crate::world::{RobotPose, SensorConfig, WorldModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    /// Stop issued away from every true target.
    StoppedOffTarget,
    NoFrontiersLeft,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub step: u64,
    pub stage: Stage,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step: u64,
    pub action: DiscreteAction,
    pub v: f64,
    pub omega: f64,
    pub substeps: u32,
}

/// Robot pose at control rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub step: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: u64,
    pub path_length: f64,
    /// Ground-truth shortest path to the nearest true target, if any.
    pub shortest_path: Option<f64>,
    pub spl: f64,
    pub termination: Termination,
    pub corrections: u32,
    pub stage_trace: Vec<StageRecord>,
    pub actions: Vec<ActionRecord>,
    #[serde(skip)]
    pub pose_trace: Vec<PoseRecord>,
}

/// Success weighted by path length.
pub fn spl(success: bool, shortest: f64, path_length: f64) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = shortest.max(path_length);
    if denom <= 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

fn pinned_goal(goal: &Goal, pin: &str) -> Goal {
    let spec = GoalSpec {
        nodes: goal
            .graph
            .nodes()
            .iter()
            .map(|n| {
                let mut attributes: Vec<String> = n.attributes.iter().cloned().collect();
                if n.id == goal.target {
                    attributes.push(pin.to_string());
                }
                GoalNodeSpec {
                    id: n.id,
                    category: Some(n.category.clone()),
                    attributes,
                    position: n.position,
                    target: n.id == goal.target,
                }
            })
            .collect(),
        edges: goal.graph.edges().iter().map(|(a, b)| [*a, *b]).collect(),
    };
    spec.to_goal().expect("derived from a valid goal")
}

/// World objects that can play the goal's target in a best possible match
/// against the fully known world.
pub fn true_targets(world: &WorldModel, goal: &Goal, d_near: f64) -> Vec<u32> {
    const PIN: &str = "#pin";
    let nodes: Vec<GraphNode> = world
        .objects()
        .iter()
        .map(|o| {
            let mut n = GraphNode::new(o.id, &o.category, &[], Some(o.position));
            n.attributes = o.attributes.clone();
            n
        })
        .collect();
    let full = SemanticGraph::scene_from_nodes(nodes.clone(), d_near);
    let Ok(best) = match_score(&full, &goal.graph) else {
        return Vec::new();
    };
    let pinned = pinned_goal(goal, PIN);
    let target = goal.target_node();
    nodes
        .iter()
        .filter(|n| node_matches(target, n))
        .filter(|n| {
            let with_pin: Vec<GraphNode> = nodes
                .iter()
                .cloned()
                .map(|mut m| {
                    if m.id == n.id {
                        m.attributes.insert(PIN.to_string());
                    }
                    m
                })
                .collect();
            let scene = SemanticGraph::scene_from_nodes(with_pin, d_near);
            match_score(&scene, &pinned.graph).is_ok_and(|m| m.score >= best.score - 1e-12)
        })
        .map(|n| n.id)
        .collect()
}

fn shortest_to_targets(world: &WorldModel, start: &RobotPose, targets: &[u32]) -> Option<f64> {
    let grid = OccupancyGrid::from_world(world);
    let from = world.cell_of(start.x, start.y)?;
    targets
        .iter()
        .filter_map(|id| {
            let o = world.object(*id)?;
            let to = world.cell_of(o.position[0], o.position[1])?;
            astar(&grid, from, to, free_only).map(|(_, d)| d)
        })
        .min_by(f64::total_cmp)
}

fn pose_record(step: u64, t: f64, p: &RobotPose) -> PoseRecord {
    PoseRecord {
        step,
        t,
        x: p.x,
        y: p.y,
        heading: p.heading,
    }
}

/// Runs one object-goal navigation episode from `start`.
pub fn run_episode(
    world: &WorldModel,
    goal: &Goal,
    start: RobotPose,
    sensor: &SensorConfig,
    cfg: &NavConfig,
    reasoner: &mut dyn Reasoner,
) -> Result<EpisodeResult, NavError> {
    cfg.validate()?;
    if !world.is_valid_pose(&start) {
        return Err(NavError::ScenarioInvalid(format!(
            "start pose ({}, {}) is not on a free cell",
            start.x, start.y
        )));
    }
    let targets = true_targets(world, goal, cfg.d_near);
    let shortest = shortest_to_targets(world, &start, &targets);
    let subgoals = decompose_goal(goal);
    let verify = cfg.verify_params();

    let mut grid = OccupancyGrid::new(world.width(), world.height(), world.cell_size());
    let mut scene = SemanticGraph::new_scene(cfg.d_near);
    let mut pose = start;
    let mut path_length = 0.0;
    let mut corrections = 0;
    let mut stage_trace = Vec::new();
    let mut actions = Vec::new();
    let mut pose_trace = vec![pose_record(0, 0.0, &pose)];
    let mut termination = Termination::MaxSteps;
    let scan_ticks =
        ((2.0 * PI - sensor.fov).max(0.0) / (TURN_RATE * cfg.decision_dt) - 1e-9).ceil() as u64;
    let mut scan_left = if cfg.initial_scan { scan_ticks } else { 0 };
    let mut since_scan = 0.0;
    let mut exhausted: Vec<nalgebra::Vector2<f64>> = Vec::new();

    for step in 0..cfg.max_steps {
        let t = step as f64 * cfg.decision_dt;
        let obs = world.observe(&pose, sensor, t);
        grid.integrate_viewed(&obs, &pose, sensor);
        scene = scene.integrate_observation(&obs, step, cfg.d_merge);
        let mut m = match_score(&scene, &goal.graph)
            .map_err(|e| NavError::ScenarioInvalid(e.to_string()))?;
        let mut stage = stage_of(m.score, cfg, false);
        let mut verified = false;
        if stage == Stage::Verify {
            match verify_and_correct(&scene, goal, &m, &obs, &pose, step, &verify) {
                VerifyOutcome::Verified => verified = true,
                VerifyOutcome::Corrected(g) => {
                    corrections += 1;
                    scene = g;
                    m = match_score(&scene, &goal.graph)
                        .map_err(|e| NavError::ScenarioInvalid(e.to_string()))?;
                    stage = stage_of(m.score, cfg, false);
                }
                VerifyOutcome::Unverifiable => {}
            }
        }
        stage_trace.push(StageRecord {
            step,
            stage,
            score: m.score,
        });
        if stage == Stage::Explore
            && scan_left == 0
            && cfg.rescan_distance > 0.0
            && since_scan >= cfg.rescan_distance
        {
            scan_left = scan_ticks;
            since_scan = 0.0;
        }
        let mut alignment = match stage {
            Stage::Align | Stage::Verify => align(&scene, goal, &m).ok(),
            _ => None,
        };
        // A partial match whose projected target was already reached gives
        // nothing more to align to; keep exploring for the missing parts.
        if let (Stage::Align, Some(a)) = (stage, alignment.as_ref()) {
            let p = nalgebra::Vector2::new(a.projected_target[0], a.projected_target[1]);
            if exhausted.iter().any(|e| (e - p).norm() < world.cell_size()) {
                alignment = None;
            } else if (pose.position() - p).norm() <= cfg.r_stop {
                exhausted.push(p);
                alignment = None;
            }
        }
        let ctx = DecisionContext {
            stage,
            verified,
            step,
            pose,
            grid: &grid,
            scene: &scene,
            subgoals: &subgoals,
            alignment: alignment.as_ref(),
            scanning: scan_left > 0,
        };
        let action = match decode_action(&ctx, reasoner, cfg) {
            Ok(a) => a,
            Err(NavError::NoFrontiersLeft) => {
                termination = Termination::NoFrontiersLeft;
                break;
            }
            Err(e) => return Err(e),
        };

        if stage != Stage::Explore {
            scan_left = 0;
        } else {
            scan_left = scan_left.saturating_sub(1);
        }
        let cmd = action_to_velocity(action);
        let tick = hold_command(world, &pose, cmd, cfg.decision_dt, cfg.control_dt);
        actions.push(ActionRecord {
            step,
            action,
            v: cmd.v,
            omega: cmd.omega,
            substeps: tick.substeps,
        });
        for (k, p) in tick.trace.iter().enumerate() {
            pose_trace.push(pose_record(step, t + (k + 1) as f64 * cfg.control_dt, p));
        }
        path_length += tick.distance;
        since_scan += tick.distance;
        pose = tick.pose;

        if action == DiscreteAction::Stop {
            stage_trace.push(StageRecord {
                step,
                stage: stage_of(m.score, cfg, verified),
                score: m.score,
            });
            let on_target = targets.iter().filter_map(|id| world.object(*id)).any(|o| {
                (pose.position() - nalgebra::Vector2::new(o.position[0], o.position[1])).norm()
                    <= cfg.r_stop
            });
            termination = if on_target {
                Termination::Success
            } else {
                Termination::StoppedOffTarget
            };
            break;
        }
    }

    let success = termination == Termination::Success;
    Ok(EpisodeResult {
        success,
        steps: actions.len() as u64,
        path_length,
        shortest_path: shortest,
        spl: spl(success, shortest.unwrap_or(0.0), path_length),
        termination,
        corrections,
        stage_trace,
        actions,
        pose_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoner::MockReasoner;
    use crate::scenegraph::parse_goal;
    use crate::world::{Cell, SemanticObject};
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn object(id: u32, cat: &str, attrs: &[&str], p: [f64; 2]) -> SemanticObject {
        SemanticObject {
            id,
            category: cat.into(),
            attributes: attrs.iter().map(|a| a.to_string()).collect(),
            position: p,
        }
    }

    fn run(world: WorldModel, goal: &str, start: RobotPose, cfg: &NavConfig) -> EpisodeResult {
        let world = Arc::new(world);
        let sensor = SensorConfig::default();
        let mut r = MockReasoner::new(world.clone(), sensor);
        let goal = parse_goal(goal).unwrap();
        run_episode(&world, &goal, start, &sensor, cfg, &mut r).unwrap()
    }

    const RED_CHAIR: &str =
        r#"{"nodes":[{"id":0,"category":"chair","attributes":["red"],"target":true}]}"#;

    #[test]
    fn spl_formula() {
        assert_eq!(spl(false, 2.0, 1.0), 0.0);
        assert_eq!(spl(true, 2.0, 4.0), 0.5);
        assert_eq!(spl(true, 2.0, 1.5), 1.0);
        assert_eq!(spl(true, 0.0, 0.0), 1.0);
    }

    #[test]
    fn visible_target_reached() {
        let world = WorldModel::new(
            20,
            20,
            0.25,
            BTreeSet::new(),
            vec![object(1, "chair", &["red"], [3.125, 1.125])],
            0,
        )
        .unwrap();
        let res = run(
            world,
            RED_CHAIR,
            RobotPose::new(2.125, 1.125, 0.0),
            &NavConfig::default(),
        );
        assert!(res.success, "{:?}", res.termination);
        assert!(res.steps < 20);
        assert_eq!(res.stage_trace.last().unwrap().stage, Stage::Done);
        assert!(res.spl > 0.0 && res.spl <= 1.0);
        let sum: f64 = res
            .pose_trace
            .windows(2)
            .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt())
            .sum();
        assert!((sum - res.path_length).abs() < 1e-9);
    }

    #[test]
    fn wrong_attribute_is_not_a_target() {
        let world = WorldModel::new(
            20,
            20,
            0.25,
            BTreeSet::new(),
            vec![
                object(1, "chair", &["blue"], [3.125, 1.125]),
                object(2, "chair", &["red"], [1.125, 4.125]),
            ],
            0,
        )
        .unwrap();
        let goal = parse_goal(RED_CHAIR).unwrap();
        assert_eq!(true_targets(&world, &goal, 1.5), vec![2]);
        let res = run(
            world,
            RED_CHAIR,
            RobotPose::new(1.125, 1.125, 0.0),
            &NavConfig::default(),
        );
        assert!(res.success);
    }

    #[test]
    fn absent_category_exhausts_frontiers() {
        let mut walls = BTreeSet::new();
        for y in 0..8 {
            walls.insert(Cell::new(4, y));
        }
        let world = WorldModel::new(
            8,
            8,
            0.25,
            walls,
            vec![object(1, "table", &[], [0.375, 0.375])],
            0,
        )
        .unwrap();
        let res = run(
            world,
            RED_CHAIR,
            RobotPose::new(0.625, 1.125, 0.0),
            &NavConfig::default(),
        );
        assert!(!res.success);
        assert_eq!(res.termination, Termination::NoFrontiersLeft);
        assert_eq!(res.shortest_path, None);
        assert_eq!(res.spl, 0.0);
    }

    #[test]
    fn zero_budget_fails_immediately() {
        let world = WorldModel::new(8, 8, 0.25, BTreeSet::new(), vec![], 0).unwrap();
        let cfg = NavConfig {
            max_steps: 0,
            ..Default::default()
        };
        let res = run(world, RED_CHAIR, RobotPose::new(1.0, 1.0, 0.0), &cfg);
        assert!(!res.success);
        assert_eq!(res.steps, 0);
        assert_eq!(res.termination, Termination::MaxSteps);
    }

    #[test]
    fn invalid_start_rejected() {
        let world = Arc::new(
            WorldModel::new(8, 8, 0.25, BTreeSet::from([Cell::new(1, 1)]), vec![], 0).unwrap(),
        );
        let sensor = SensorConfig::default();
        let mut r = MockReasoner::new(world.clone(), sensor);
        let goal = parse_goal(RED_CHAIR).unwrap();
        let res = run_episode(
            &world,
            &goal,
            RobotPose::new(0.3, 0.3, 0.0),
            &sensor,
            &NavConfig::default(),
            &mut r,
        );
        assert!(matches!(res, Err(NavError::ScenarioInvalid(_))));
    }

    #[test]
    fn every_tick_has_fifty_substeps() {
        let world = WorldModel::new(
            20,
            20,
            0.25,
            BTreeSet::new(),
            vec![object(1, "chair", &["red"], [4.125, 4.125])],
            0,
        )
        .unwrap();
        let res = run(
            world,
            RED_CHAIR,
            RobotPose::new(1.125, 1.125, 3.0),
            &NavConfig::default(),
        );
        assert!(res.actions.iter().all(|a| a.substeps == 50));
        assert_eq!(res.pose_trace.len(), 1 + 50 * res.actions.len());
    }
}
