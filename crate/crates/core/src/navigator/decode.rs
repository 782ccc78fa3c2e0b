use nalgebra::Vector2;

use super::grid::{distance_field, free_only, not_occupied, CellState, OccupancyGrid, PathField};
use super::{action_to_velocity, frontiers, hold_with, DiscreteAction, NavConfig, NavError, Stage};
use super::{FORWARD_SPEED, TURN_RATE};
use crate::geometry::wrap_angle;
use crate::reasoner::{Candidates, QueryKind, Reasoner, ReasonerQuery};
use crate::scenegraph::{Alignment, SemanticGraph, SubGoal};
use crate::world::{step_unicycle, Cell, RobotPose};

/// Sampling step for line-of-sight checks along the known grid.
const LOS_STEP: f64 = 0.05;
/// Clearance kept from occupied cells along a steering segment. Larger than
/// the lateral drift of one forward tick at the heading tolerance.
const CLEARANCE: f64 = 0.04;

/// Everything known to the robot at one decision tick.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub stage: Stage,
    pub verified: bool,
    pub step: u64,
    pub pose: RobotPose,
    pub grid: &'a OccupancyGrid,
    pub scene: &'a SemanticGraph,
    pub subgoals: &'a [SubGoal],
    pub alignment: Option<&'a Alignment>,
    /// Still looking around at the start of the episode.
    pub scanning: bool,
}

/// Chooses the next discrete action.
///
/// Exploration steers toward the reasoner's favourite reachable frontier.
/// Once a projected target exists, forward/left/right are scored by the
/// reasoner's expected score improvement minus a small time-to-go penalty
/// toward the target. Stop requires a verified target within `r_stop`.
pub fn decode_action(
    ctx: &DecisionContext,
    reasoner: &mut dyn Reasoner,
    cfg: &NavConfig,
) -> Result<DiscreteAction, NavError> {
    match (ctx.stage, ctx.alignment) {
        (Stage::Explore, _) if ctx.scanning => Ok(DiscreteAction::TurnLeft),
        (Stage::Align | Stage::Verify, Some(a)) => decode_toward_target(ctx, a, reasoner, cfg),
        _ => decode_explore(ctx, reasoner, cfg),
    }
}

fn robot_cell(ctx: &DecisionContext) -> Result<Cell, NavError> {
    ctx.grid
        .cell_of(ctx.pose.x, ctx.pose.y)
        .ok_or_else(|| NavError::ScenarioInvalid("robot left the map".into()))
}

fn query(
    ctx: &DecisionContext,
    kind: QueryKind,
    candidates: Candidates,
    cfg: &NavConfig,
) -> ReasonerQuery {
    ReasonerQuery {
        kind,
        step: ctx.step,
        scene: ctx.scene.nodes().to_vec(),
        subgoals: ctx.subgoals.to_vec(),
        candidates,
        pose: ctx.pose,
        decision_dt: cfg.decision_dt,
    }
}

fn decode_explore(
    ctx: &DecisionContext,
    reasoner: &mut dyn Reasoner,
    cfg: &NavConfig,
) -> Result<DiscreteAction, NavError> {
    let start = robot_cell(ctx)?;
    let field = distance_field(ctx.grid, start, free_only);
    let reachable: Vec<Cell> = frontiers(ctx.grid)
        .into_iter()
        .filter(|c| field.distance(*c).is_some())
        .collect();
    if reachable.is_empty() {
        return Err(NavError::NoFrontiersLeft);
    }
    let q = query(
        ctx,
        QueryKind::RankFrontiers,
        Candidates::Frontiers(reachable.clone()),
        cfg,
    );
    let scores = reasoner.rank_frontiers(&q)?.scores;
    let best = argmax_first(&scores);
    let frontier = reachable[best];
    let path = field.path_to(frontier).expect("frontier is reachable");
    let unknown = frontier
        .neighbors4()
        .into_iter()
        .find(|n| ctx.grid.in_bounds(*n) && ctx.grid.get(*n) == CellState::Unknown)
        .expect("frontier borders unknown space");
    let waypoint = plan_waypoint(
        ctx.grid,
        &ctx.pose,
        &path,
        ctx.grid.cell_center(unknown),
        cfg.lookahead_cells,
    );
    Ok(heading_rule(ctx.grid, &ctx.pose, waypoint))
}

fn decode_toward_target(
    ctx: &DecisionContext,
    alignment: &Alignment,
    reasoner: &mut dyn Reasoner,
    cfg: &NavConfig,
) -> Result<DiscreteAction, NavError> {
    let target = Vector2::new(alignment.projected_target[0], alignment.projected_target[1]);
    if ctx.stage == Stage::Verify
        && ctx.verified
        && (target - ctx.pose.position()).norm() <= cfg.r_stop
    {
        return Ok(DiscreteAction::Stop);
    }

    let waypoint = target_waypoint(ctx, target, cfg)?;
    let moves: Vec<DiscreteAction> = cfg
        .tie_break
        .iter()
        .copied()
        .filter(|a| *a != DiscreteAction::Stop)
        .collect();
    let q = query(
        ctx,
        QueryKind::EstimateImprovement,
        Candidates::Actions(moves.clone()),
        cfg,
    );
    let gains = reasoner.estimate_improvement(&q)?.scores;

    let mut best: Option<(DiscreteAction, f64)> = None;
    for (a, gain) in moves.iter().zip(&gains) {
        let next = simulate_known(ctx.grid, &ctx.pose, *a, cfg);
        if *a == DiscreteAction::MoveForward && next.position() == ctx.pose.position() {
            continue;
        }
        let value = gain - cfg.path_cost_weight * time_to_go(&next, waypoint);
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((*a, value));
        }
    }
    Ok(best.map_or(DiscreteAction::TurnLeft, |(a, _)| a))
}

/// Steering point toward `target` over non-occupied known cells, or toward
/// the reachable cell closest to it when the target cell is cut off.
fn target_waypoint(
    ctx: &DecisionContext,
    target: Vector2<f64>,
    cfg: &NavConfig,
) -> Result<Vector2<f64>, NavError> {
    let start = robot_cell(ctx)?;
    let field = distance_field(ctx.grid, start, not_occupied);
    let goal_cell = ctx.grid.cell_of(target.x, target.y);
    let (goal, end) = match goal_cell.filter(|c| field.distance(*c).is_some()) {
        Some(c) => (c, target),
        None => {
            let c = nearest_reachable(ctx.grid, &field, target).unwrap_or(start);
            (c, ctx.grid.cell_center(c))
        }
    };
    let path = field.path_to(goal).unwrap_or_else(|| vec![start]);
    Ok(plan_waypoint(
        ctx.grid,
        &ctx.pose,
        &path,
        end,
        cfg.lookahead_cells,
    ))
}

fn nearest_reachable(grid: &OccupancyGrid, field: &PathField, p: Vector2<f64>) -> Option<Cell> {
    grid.cells()
        .map(|(c, _)| c)
        .filter(|c| field.distance(*c).is_some())
        .map(|c| (c, (grid.cell_center(c) - p).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| c)
}

/// Whether the segment `a -> b` keeps `CLEARANCE` from occupied cells,
/// except right at the start where the robot already is.
fn corridor_clear(grid: &OccupancyGrid, a: Vector2<f64>, b: Vector2<f64>) -> bool {
    let len = (b - a).norm();
    let n = (len / LOS_STEP).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let p = a + (b - a) * (k as f64 / n as f64);
        let free_at = |x: f64, y: f64| {
            grid.cell_of(x, y)
                .is_some_and(|c| grid.get(c) != CellState::Occupied)
        };
        if !free_at(p.x, p.y) {
            return false;
        }
        if (p - a).norm() < LOS_STEP {
            return true;
        }
        [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
            .iter()
            .all(|(sx, sy)| free_at(p.x + sx * CLEARANCE, p.y + sy * CLEARANCE))
    })
}

/// Farthest point along `path` (at most `lookahead` cells ahead) that the
/// robot can reach in a straight line with clearance. The last path cell is
/// replaced by `end`. Without any such point the robot re-centers in its
/// own cell first.
pub fn plan_waypoint(
    grid: &OccupancyGrid,
    pose: &RobotPose,
    path: &[Cell],
    end: Vector2<f64>,
    lookahead: usize,
) -> Vector2<f64> {
    let mut points: Vec<Vector2<f64>> = path.iter().skip(1).map(|c| grid.cell_center(*c)).collect();
    match points.last_mut() {
        Some(last) => *last = end,
        None => points.push(end),
    }
    let origin = pose.position();
    let horizon = lookahead.max(1).min(points.len());
    if let Some(p) = points[..horizon]
        .iter()
        .rev()
        .find(|p| corridor_clear(grid, origin, **p))
    {
        return *p;
    }
    match grid
        .cell_of(origin.x, origin.y)
        .map(|c| grid.cell_center(c))
    {
        Some(center) if (center - origin).norm() > LOS_STEP => center,
        _ => points[0],
    }
}

/// Forward when facing the waypoint within one turn increment, otherwise
/// turn toward it. A forward move blocked on the known grid becomes a turn.
fn heading_rule(grid: &OccupancyGrid, pose: &RobotPose, waypoint: Vector2<f64>) -> DiscreteAction {
    let d = waypoint - pose.position();
    let err = wrap_angle(d.y.atan2(d.x) - pose.heading);
    let blocked = || {
        let next = step_unicycle(pose, action_to_velocity(DiscreteAction::MoveForward), 1.0);
        !grid.segment_clear(pose.position(), next.position(), LOS_STEP, not_occupied)
    };
    if err.abs() <= TURN_RATE && !blocked() {
        DiscreteAction::MoveForward
    } else if err >= 0.0 {
        DiscreteAction::TurnLeft
    } else {
        DiscreteAction::TurnRight
    }
}

/// One tick of `a` against the known grid: unknown space is assumed free.
fn simulate_known(
    grid: &OccupancyGrid,
    pose: &RobotPose,
    a: DiscreteAction,
    cfg: &NavConfig,
) -> RobotPose {
    let cmd = action_to_velocity(a);
    hold_with(pose, cmd, cfg.decision_dt, cfg.control_dt, |p, c, dt| {
        let next = step_unicycle(p, c, dt);
        match grid.cell_of(next.x, next.y) {
            Some(cell) if grid.get(cell) != CellState::Occupied => next,
            _ => RobotPose {
                x: p.x,
                y: p.y,
                heading: next.heading,
            },
        }
    })
    .pose
}

/// Seconds to reach `waypoint`: straight-line travel plus turning on the spot.
fn time_to_go(pose: &RobotPose, waypoint: Vector2<f64>) -> f64 {
    let d = waypoint - pose.position();
    let dist = d.norm();
    let turn = if dist < 1e-9 {
        0.0
    } else {
        wrap_angle(d.y.atan2(d.x) - pose.heading).abs()
    };
    dist / FORWARD_SPEED + turn / TURN_RATE
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}
