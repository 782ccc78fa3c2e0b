//! Damped-least-squares reference controller and reward trace.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::chain::rotation_log;
use super::{
    forward_kinematics, jacobian_fd, reward_reg, reward_total, reward_track, tracking_errors,
    KinematicChain, RewardParams, WholeBodyError,
};
use crate::geometry::SE3Pose;
use crate::handtrack::TcpTrajectory;

pub const REWARD_CSV_HEADER: [&str; 8] = [
    "step", "t", "r_track", "r_reg", "r_style", "r_total", "pos_err", "ang_err",
];

/// Control rate the target trajectory must be sampled at.
const CONTROL_RATE: f64 = 50.0;
const JACOBIAN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    /// DLS damping `lambda_dls`.
    pub damping: f64,
    /// Largest joint change per control step, in radians. Larger steps are
    /// scaled down as a whole, keeping their direction.
    pub step_cap: f64,
    pub reward: RewardParams,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            step_cap: 0.05,
            reward: RewardParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub step: usize,
    pub t: f64,
    pub r_track: f64,
    pub r_reg: f64,
    pub r_style: f64,
    pub r_total: f64,
    pub pos_err: f64,
    pub ang_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    /// Joint vectors, starting with `q0`; one more entry than `rewards`.
    pub joints: Vec<Vec<f64>>,
    pub rewards: Vec<RewardRecord>,
}

impl TrackResult {
    pub fn mean_track(&self) -> f64 {
        self.rewards.iter().map(|r| r.r_track).sum::<f64>() / self.rewards.len().max(1) as f64
    }
}

/// Translation error and world-frame rotation vector taking `tcp` to `target`.
pub fn pose_error_twist(tcp: &SE3Pose, target: &SE3Pose) -> Vector6<f64> {
    let dp = target.position() - tcp.position();
    let dr = rotation_log(target.rotation(), tcp.rotation());
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn dls_step(jac: &DMatrix<f64>, err: &Vector6<f64>, damping: f64) -> DVector<f64> {
    let jjt = jac * jac.transpose() + DMatrix::identity(6, 6) * (damping * damping);
    let e = DVector::from_column_slice(err.as_slice());
    let x = match jjt.clone().cholesky() {
        Some(c) => c.solve(&e),
        None => jjt.lu().solve(&e).unwrap_or_else(|| DVector::zeros(6)),
    };
    jac.transpose() * x
}

/// DLS step with joints that sit on a limit and would be pushed past it
/// removed, scaled down as a whole so no joint moves more than the cap.
fn capped_step(
    chain: &KinematicChain,
    q: &[f64],
    mut jac: DMatrix<f64>,
    err: &Vector6<f64>,
    cfg: &TrackConfig,
) -> DVector<f64> {
    let free = dls_step(&jac, err, cfg.damping);
    let mut pinned = false;
    for (j, l) in chain.links.iter().enumerate() {
        if (q[j] <= l.limits[0] && free[j] < 0.0) || (q[j] >= l.limits[1] && free[j] > 0.0) {
            jac.column_mut(j).fill(0.0);
            pinned = true;
        }
    }
    let mut delta = if pinned {
        dls_step(&jac, err, cfg.damping)
    } else {
        free
    };
    let largest = delta.amax();
    if largest > cfg.step_cap {
        delta *= cfg.step_cap / largest;
    }
    delta
}

fn check_config(cfg: &TrackConfig) -> Result<(), WholeBodyError> {
    cfg.reward.validate()?;
    if !(cfg.damping >= 0.0
        && cfg.damping.is_finite()
        && cfg.step_cap > 0.0
        && cfg.step_cap.is_finite())
    {
        return Err(WholeBodyError::InvalidParams(
            "damping must be non-negative and step_cap positive".into(),
        ));
    }
    Ok(())
}

/// Tracks each target sample for one control step. Actions are joint
/// offsets from `q_default`; torques are not simulated and enter the
/// regularizer as zeros.
pub fn track_reference(
    chain: &KinematicChain,
    q0: &[f64],
    target: &TcpTrajectory,
    cfg: &TrackConfig,
) -> Result<TrackResult, WholeBodyError> {
    track_reference_with_style(chain, q0, target, cfg, |_, _| 0.0)
}

/// [`track_reference`] with a style term `style(step, q)` added to the total.
pub fn track_reference_with_style(
    chain: &KinematicChain,
    q0: &[f64],
    target: &TcpTrajectory,
    cfg: &TrackConfig,
    style: impl Fn(usize, &[f64]) -> f64,
) -> Result<TrackResult, WholeBodyError> {
    check_config(cfg)?;
    if (target.rate - CONTROL_RATE).abs() > 1e-9 || !target.is_uniform(1e-9) {
        return Err(WholeBodyError::RateMismatch {
            expected: CONTROL_RATE,
            got: target.rate,
        });
    }
    let dt = 1.0 / CONTROL_RATE;
    let n = chain.dof();
    let mut q = q0.to_vec();
    forward_kinematics(chain, &q)?;
    let zeros = vec![0.0; n];
    let mut prev_action: Vec<f64> = q.iter().zip(&chain.q_default).map(|(a, b)| a - b).collect();
    let mut prev_dq = zeros.clone();
    let mut joints = vec![q.clone()];
    let mut rewards = Vec::with_capacity(target.samples.len());

    for (step, sample) in target.samples.iter().enumerate() {
        let tcp = forward_kinematics(chain, &q)?;
        let jac = jacobian_fd(chain, &q, JACOBIAN_EPS)?;
        let err = pose_error_twist(&tcp, &sample.pose);
        let delta = capped_step(chain, &q, jac, &err, cfg);
        let mut next: Vec<f64> = q.iter().zip(delta.iter()).map(|(qi, d)| qi + d).collect();
        chain.clamp(&mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(WholeBodyError::NonFinite("joint update"));
        }

        let dq: Vec<f64> = next.iter().zip(&q).map(|(a, b)| (a - b) / dt).collect();
        let qdd: Vec<f64> = dq.iter().zip(&prev_dq).map(|(a, b)| (a - b) / dt).collect();
        let action: Vec<f64> = next
            .iter()
            .zip(&chain.q_default)
            .map(|(a, b)| a - b)
            .collect();

        let reached = forward_kinematics(chain, &next)?;
        let (pos_err, ang_err) = tracking_errors(&reached, &sample.pose);
        let r_track = reward_track(&reached, &sample.pose, &cfg.reward);
        let r_reg = reward_reg(&zeros, &action, &prev_action, &qdd, &cfg.reward)?;
        let r_style = style(step, &next);
        rewards.push(RewardRecord {
            step,
            t: sample.t,
            r_track,
            r_reg,
            r_style,
            r_total: reward_total(r_track, r_reg, r_style),
            pos_err,
            ang_err,
        });

        prev_action = action;
        prev_dq = dq;
        q = next;
        joints.push(q.clone());
    }
    Ok(TrackResult { joints, rewards })
}

pub fn write_reward_csv(writer: impl Write, records: &[RewardRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REWARD_CSV_HEADER)?;
    for r in records {
        w.write_record(&[
            r.step.to_string(),
            r.t.to_string(),
            r.r_track.to_string(),
            r.r_reg.to_string(),
            r.r_style.to_string(),
            r.r_total.to_string(),
            r.pos_err.to_string(),
            r.ang_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
