//! Three-stage goal-driven exploration: frontier exploration while the goal
//! is barely matched, anchor alignment once it is partially matched, and
//! verification before stopping at the target.

mod action;
mod decode;
mod episode;
pub mod grid;
mod stage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reasoner::ReasonerError;
use crate::scenegraph::{VerifyParams, DEFAULT_D_MERGE, DEFAULT_D_NEAR, DEFAULT_R_VERIFY};
use crate::world::{RobotPose, VelocityCommand, WorldModel};

pub use action::{action_to_velocity, DiscreteAction, FORWARD_SPEED, TURN_RATE};
pub use decode::{decode_action, plan_waypoint, DecisionContext};
pub use episode::{
    run_episode, spl, true_targets, ActionRecord, EpisodeResult, PoseRecord, StageRecord,
    Termination,
};
pub use grid::{frontiers, CellState, OccupancyGrid};
pub use stage::{stage_of, Stage};

/// Control period of the low-level controller (50 Hz).
pub const CONTROL_DT: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error("no reachable frontier left to explore")]
    NoFrontiersLeft,
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("invalid navigation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub decision_dt: f64,
    pub control_dt: f64,
    pub r_stop: f64,
    pub max_steps: u64,
    pub d_near: f64,
    pub d_merge: f64,
    pub r_verify: f64,
    pub staleness: u64,
    /// Weight of the time-to-go tiebreaker against score improvements.
    pub path_cost_weight: f64,
    /// Farthest path cell considered when picking a steering waypoint.
    pub lookahead_cells: usize,
    /// Turn on the spot at the start until the full circle has been in view.
    pub initial_scan: bool,
    /// Look around again after travelling this far while exploring; zero
    /// disables.
    pub rescan_distance: f64,
    pub tie_break: [DiscreteAction; 4],
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            sigma1: 0.3,
            sigma2: 0.7,
            decision_dt: 1.0,
            control_dt: CONTROL_DT,
            r_stop: 0.5,
            max_steps: 1000,
            d_near: DEFAULT_D_NEAR,
            d_merge: DEFAULT_D_MERGE,
            r_verify: DEFAULT_R_VERIFY,
            staleness: 0,
            path_cost_weight: 1e-3,
            lookahead_cells: 8,
            initial_scan: true,
            rescan_distance: 1.25,
            tie_break: DiscreteAction::ALL,
        }
    }
}

impl NavConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        let err = |m: String| Err(NavError::Config(m));
        if !(0.0 < self.sigma1 && self.sigma1 < self.sigma2 && self.sigma2 <= 1.0) {
            return err(format!(
                "need 0 < sigma1 < sigma2 <= 1, got {} and {}",
                self.sigma1, self.sigma2
            ));
        }
        if self.control_dt != CONTROL_DT {
            return err(format!(
                "control_dt is fixed at {CONTROL_DT}, got {}",
                self.control_dt
            ));
        }
        if self.decision_dt.is_nan() || self.decision_dt <= 0.0 {
            return err(format!(
                "decision_dt must be positive, got {}",
                self.decision_dt
            ));
        }
        let ratio = self.decision_dt / self.control_dt;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return err(format!(
                "decision_dt {} is not a whole number of control periods",
                self.decision_dt
            ));
        }
        if !(self.r_stop > 0.0 && self.d_near > 0.0 && self.d_merge > 0.0 && self.r_verify > 0.0) {
            return err("distances must be positive".into());
        }
        let mut order = self.tie_break.to_vec();
        order.sort();
        order.dedup();
        if order.len() != 4 {
            return err("tie_break must list each action once".into());
        }
        Ok(())
    }

    pub fn substeps_per_tick(&self) -> u32 {
        (self.decision_dt / self.control_dt).round() as u32
    }

    pub fn verify_params(&self) -> VerifyParams {
        VerifyParams {
            r_verify: self.r_verify,
            staleness: self.staleness,
            d_merge: self.d_merge,
        }
    }
}

/// Outcome of holding a velocity command for one decision tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickResult {
    pub pose: RobotPose,
    pub substeps: u32,
    pub distance: f64,
    /// Pose after each control substep.
    pub trace: Vec<RobotPose>,
}

/// Holds `cmd` for `decision_dt`, integrating the world's unicycle model at
/// `control_dt`.
pub fn hold_command(
    world: &WorldModel,
    start: &RobotPose,
    cmd: VelocityCommand,
    decision_dt: f64,
    control_dt: f64,
) -> TickResult {
    hold_with(start, cmd, decision_dt, control_dt, |p, c, dt| {
        world.step_unicycle(p, c, dt)
    })
}

pub(crate) fn hold_with(
    start: &RobotPose,
    cmd: VelocityCommand,
    decision_dt: f64,
    control_dt: f64,
    step: impl Fn(&RobotPose, VelocityCommand, f64) -> RobotPose,
) -> TickResult {
    let n = (decision_dt / control_dt).round() as u32;
    let mut pose = *start;
    let mut distance = 0.0;
    let mut trace = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let next = step(&pose, cmd, control_dt);
        distance += (next.position() - pose.position()).norm();
        pose = next;
        trace.push(pose);
    }
    TickResult {
        pose,
        substeps: n,
        distance,
        trace,
    }
}
