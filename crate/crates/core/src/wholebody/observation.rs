//! Flat observation vector for the whole-body policy.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{check_len, WholeBodyError};
use crate::geometry::{rot_from_6d, rot_to_6d, Rot6D, SE3Pose};

/// Bumped whenever the block order or a block meaning changes.
pub const LAYOUT_VERSION: u32 = 1;

/// Proprioceptive and base state of the legged manipulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub leg_q: Vec<f64>,
    pub leg_dq: Vec<f64>,
    /// Unit gravity direction in the body frame.
    pub gravity: [f64; 3],
    pub prev_leg_action: Vec<f64>,
    pub arm_q: Vec<f64>,
    pub arm_dq: Vec<f64>,
    pub prev_arm_action: Vec<f64>,
    pub base_ang_vel: [f64; 3],
    pub base_lin_vel: [f64; 3],
}

/// Block sizes of the observation. The order of blocks is fixed:
///
/// | block | size |
/// |---|---|
/// | leg_q, leg_dq | legs each |
/// | gravity | 3 |
/// | prev_leg_action | legs |
/// | arm_q, arm_dq, prev_arm_action | arm each |
/// | base_ang_vel, base_lin_vel | 3 each |
/// | target position | 3 |
/// | target rotation, 6D | 6 |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationLayout {
    pub leg_dofs: usize,
    pub arm_dofs: usize,
}

impl Default for ObservationLayout {
    fn default() -> Self {
        Self {
            leg_dofs: 12,
            arm_dofs: 6,
        }
    }
}

impl ObservationLayout {
    /// Block names and sizes in packing order.
    pub fn blocks(&self) -> [(&'static str, usize); 11] {
        let (l, a) = (self.leg_dofs, self.arm_dofs);
        [
            ("leg_q", l),
            ("leg_dq", l),
            ("gravity", 3),
            ("prev_leg_action", l),
            ("arm_q", a),
            ("arm_dq", a),
            ("prev_arm_action", a),
            ("base_ang_vel", 3),
            ("base_lin_vel", 3),
            ("target_position", 3),
            ("target_rot6d", 6),
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zero_state(&self) -> RobotState {
        RobotState {
            leg_q: vec![0.0; self.leg_dofs],
            leg_dq: vec![0.0; self.leg_dofs],
            gravity: [0.0, 0.0, -1.0],
            prev_leg_action: vec![0.0; self.leg_dofs],
            arm_q: vec![0.0; self.arm_dofs],
            arm_dq: vec![0.0; self.arm_dofs],
            prev_arm_action: vec![0.0; self.arm_dofs],
            base_ang_vel: [0.0; 3],
            base_lin_vel: [0.0; 3],
        }
    }

    pub fn validate_state(&self, s: &RobotState) -> Result<(), WholeBodyError> {
        check_len("leg_q", self.leg_dofs, s.leg_q.len())?;
        check_len("leg_dq", self.leg_dofs, s.leg_dq.len())?;
        check_len("prev_leg_action", self.leg_dofs, s.prev_leg_action.len())?;
        check_len("arm_q", self.arm_dofs, s.arm_q.len())?;
        check_len("arm_dq", self.arm_dofs, s.arm_dq.len())?;
        check_len("prev_arm_action", self.arm_dofs, s.prev_arm_action.len())?;
        if state_blocks(s)
            .iter()
            .any(|b| b.iter().any(|x| !x.is_finite()))
        {
            return Err(WholeBodyError::NonFinite("robot state"));
        }
        let g = Vector3::from(s.gravity).norm();
        if (g - 1.0).abs() > 1e-9 {
            return Err(WholeBodyError::NonUnitGravity(g));
        }
        Ok(())
    }
}

fn state_blocks(s: &RobotState) -> [&[f64]; 9] {
    [
        &s.leg_q,
        &s.leg_dq,
        &s.gravity,
        &s.prev_leg_action,
        &s.arm_q,
        &s.arm_dq,
        &s.prev_arm_action,
        &s.base_ang_vel,
        &s.base_lin_vel,
    ]
}

/// Packs the state and the current TCP target in layout order.
pub fn pack_observation(
    s: &RobotState,
    tcp_target: &SE3Pose,
    layout: &ObservationLayout,
) -> Result<Vec<f64>, WholeBodyError> {
    layout.validate_state(s)?;
    let mut out = Vec::with_capacity(layout.len());
    for block in state_blocks(s) {
        out.extend_from_slice(block);
    }
    out.extend_from_slice(&tcp_target.position_array());
    out.extend_from_slice(&rot_to_6d(tcp_target.rotation()).0);
    Ok(out)
}

/// Inverse of [`pack_observation`]; the target rotation is re-orthonormalized.
pub fn unpack_observation(
    v: &[f64],
    layout: &ObservationLayout,
) -> Result<(RobotState, SE3Pose), WholeBodyError> {
    check_len("observation", layout.len(), v.len())?;
    let mut rest = v;
    let mut take = |n: usize| {
        let (head, tail) = rest.split_at(n);
        rest = tail;
        head.to_vec()
    };
    let arr3 = |b: Vec<f64>| [b[0], b[1], b[2]];
    let (l, a) = (layout.leg_dofs, layout.arm_dofs);
    let leg_q = take(l);
    let leg_dq = take(l);
    let gravity = arr3(take(3));
    let prev_leg_action = take(l);
    let arm_q = take(a);
    let arm_dq = take(a);
    let prev_arm_action = take(a);
    let base_ang_vel = arr3(take(3));
    let base_lin_vel = arr3(take(3));
    let p = take(3);
    let r = take(6);
    let rot = rot_from_6d(&Rot6D([r[0], r[1], r[2], r[3], r[4], r[5]]))?;
    let state = RobotState {
        leg_q,
        leg_dq,
        gravity,
        prev_leg_action,
        arm_q,
        arm_dq,
        prev_arm_action,
        base_ang_vel,
        base_lin_vel,
    };
    Ok((state, SE3Pose::new(Vector3::new(p[0], p[1], p[2]), rot)))
}
