//! Whole-body policy scaffolding: observation packing, PD action targets,
//! tracking and regularization rewards, a revolute kinematic chain and a
//! damped-least-squares reference controller.

mod chain;
mod observation;
mod track;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{geodesic_angle, GeometryError, SE3Pose};

pub use chain::{
    forward_kinematics, jacobian_fd, pd_target, ChainFile, KinematicChain, Link, LinkFile,
};
pub use observation::{
    pack_observation, unpack_observation, ObservationLayout, RobotState, LAYOUT_VERSION,
};
pub use track::{
    pose_error_twist, track_reference, track_reference_with_style, write_reward_csv, RewardRecord,
    TrackConfig, TrackResult, REWARD_CSV_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WholeBodyError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gravity must be a unit vector, norm is {0}")]
    NonUnitGravity(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("malformed chain: {0}")]
    MalformedChain(String),
    #[error("target trajectory must be uniform at {expected} Hz, got {got} Hz")]
    RateMismatch { expected: f64, got: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub(crate) fn check_len(
    what: &'static str,
    expected: usize,
    got: usize,
) -> Result<(), WholeBodyError> {
    if expected == got {
        Ok(())
    } else {
        Err(WholeBodyError::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    /// Position scale of the tracking reward, in meters.
    pub sigma_p: f64,
    /// Orientation scale of the tracking reward, in radians.
    pub sigma_o: f64,
    pub lambda_tau: f64,
    pub lambda_dq: f64,
    pub lambda_qdd: f64,
    pub gamma: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            sigma_p: 0.1,
            sigma_o: 0.5,
            lambda_tau: 1e-4,
            lambda_dq: 0.1,
            lambda_qdd: 1e-4,
            gamma: 0.99,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), WholeBodyError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let non_negative = |x: f64| x >= 0.0 && x.is_finite();
        if !(positive(self.sigma_p) && positive(self.sigma_o)) {
            return Err(WholeBodyError::InvalidParams(
                "sigma_p and sigma_o must be positive".into(),
            ));
        }
        if ![self.lambda_tau, self.lambda_dq, self.lambda_qdd]
            .into_iter()
            .all(non_negative)
        {
            return Err(WholeBodyError::InvalidParams(
                "lambdas must be non-negative".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(WholeBodyError::InvalidParams(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Euclidean position error and geodesic orientation error.
pub fn tracking_errors(tcp: &SE3Pose, target: &SE3Pose) -> (f64, f64) {
    let pos = (tcp.position() - target.position()).norm();
    let ang = geodesic_angle(tcp.rotation(), target.rotation());
    (pos, ang)
}

/// `exp(-pos_err / sigma_p) * exp(-ang_err / sigma_o)`, in `(0, 1]`.
pub fn reward_track(tcp: &SE3Pose, target: &SE3Pose, params: &RewardParams) -> f64 {
    let (pos, ang) = tracking_errors(tcp, target);
    (-pos / params.sigma_p).exp() * (-ang / params.sigma_o).exp()
}

fn squared_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum()
}

/// Torque, action-rate and joint-acceleration penalties; never positive.
pub fn reward_reg(
    tau: &[f64],
    action: &[f64],
    prev_action: &[f64],
    qdd: &[f64],
    params: &RewardParams,
) -> Result<f64, WholeBodyError> {
    let n = action.len();
    check_len("torque", n, tau.len())?;
    check_len("previous action", n, prev_action.len())?;
    check_len("joint acceleration", n, qdd.len())?;
    let tau_sq = squared_norm(tau.iter().copied());
    let rate_sq = squared_norm(action.iter().zip(prev_action).map(|(a, b)| a - b));
    let qdd_sq = squared_norm(qdd.iter().copied());
    // `+ 0.0` turns a zero penalty into +0 rather than -0.
    Ok(
        -(params.lambda_tau * tau_sq + params.lambda_dq * rate_sq + params.lambda_qdd * qdd_sq)
            + 0.0,
    )
}

pub fn reward_total(track: f64, reg: f64, style: f64) -> f64 {
    track + reg + style
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};
    use std::f64::consts::E;

    #[test]
    fn track_reward_values() {
        let p = RewardParams::default();
        let target = SE3Pose::new(
            Vector3::new(0.2, 0.1, 0.3),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        assert_eq!(reward_track(&target, &target, &p), 1.0);
        let shifted = SE3Pose::new(
            target.position() + Vector3::new(0.0, p.sigma_p, 0.0),
            *target.rotation(),
        );
        assert!((reward_track(&shifted, &target, &p) - 1.0 / E).abs() < 1e-12);
        let turned = SE3Pose::new(
            *shifted.position(),
            target.rotation() * UnitQuaternion::from_euler_angles(p.sigma_o, 0.0, 0.0),
        );
        assert!((reward_track(&turned, &target, &p) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn reg_reward_values() {
        let p = RewardParams {
            lambda_tau: 1.0,
            lambda_dq: 1.0,
            lambda_qdd: 1.0,
            ..Default::default()
        };
        let z = [0.0; 3];
        assert_eq!(reward_reg(&z, &z, &z, &z, &p).unwrap(), 0.0);
        assert_eq!(reward_reg(&[1.0, 0.0, 0.0], &z, &z, &z, &p).unwrap(), -1.0);
        assert_eq!(
            reward_reg(&[0.0, 0.0, 0.0], &[1.0, 2.0, 0.0], &[0.0, 0.0, 2.0], &z, &p).unwrap(),
            -9.0
        );
        assert!(matches!(
            reward_reg(&z, &z, &[0.0; 2], &z, &p),
            Err(WholeBodyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn total_is_sum() {
        assert_eq!(reward_total(1.0, 0.0, 0.0), 1.0);
        assert!((reward_total(0.5, -0.2, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(
            reward_total(0.5, -0.25, 0.125) - reward_total(0.5, -0.25, 0.0),
            0.125
        );
    }

    #[test]
    fn param_validation() {
        assert!(RewardParams::default().validate().is_ok());
        for bad in [
            RewardParams {
                sigma_p: 0.0,
                ..Default::default()
            },
            RewardParams {
                sigma_o: -1.0,
                ..Default::default()
            },
            RewardParams {
                lambda_dq: -0.1,
                ..Default::default()
            },
            RewardParams {
                gamma: 1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
