//! Serial revolute chain: forward kinematics and finite-difference Jacobian.

use nalgebra::{DMatrix, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{check_len, WholeBodyError};
use crate::geometry::{PoseJson, SE3Pose};

/// One revolute joint preceded by a fixed offset from the previous frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub offset: SE3Pose,
    pub axis: Unit<Vector3<f64>>,
    /// `[lower, upper]` in radians.
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub base: SE3Pose,
    pub links: Vec<Link>,
    /// Fixed transform from the last joint frame to the TCP.
    pub tool: SE3Pose,
    pub q_default: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkFile {
    pub offset: PoseJson,
    pub axis: [f64; 3],
    /// Unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

/// On-disk chain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainFile {
    #[serde(default = "identity_json")]
    pub base: PoseJson,
    pub links: Vec<LinkFile>,
    #[serde(default = "identity_json")]
    pub tool: PoseJson,
    /// Zeros when absent.
    #[serde(default)]
    pub q_default: Option<Vec<f64>>,
}

fn identity_json() -> PoseJson {
    PoseJson::from_pose(&SE3Pose::identity())
}

impl KinematicChain {
    pub fn new(
        base: SE3Pose,
        links: Vec<Link>,
        tool: SE3Pose,
        q_default: Vec<f64>,
    ) -> Result<Self, WholeBodyError> {
        if links.is_empty() {
            return Err(WholeBodyError::MalformedChain(
                "chain needs at least one joint".into(),
            ));
        }
        check_len("q_default", links.len(), q_default.len())?;
        for (i, l) in links.iter().enumerate() {
            let [lo, hi] = l.limits;
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(WholeBodyError::MalformedChain(format!(
                    "joint {i}: bad limits [{lo}, {hi}]"
                )));
            }
        }
        if q_default.iter().any(|q| !q.is_finite()) {
            return Err(WholeBodyError::NonFinite("q_default"));
        }
        Ok(Self {
            base,
            links,
            tool,
            q_default,
        })
    }

    pub fn from_file(file: &ChainFile) -> Result<Self, WholeBodyError> {
        let mut links = Vec::with_capacity(file.links.len());
        for (i, l) in file.links.iter().enumerate() {
            let axis = Vector3::from(l.axis);
            let norm = axis.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
                return Err(WholeBodyError::MalformedChain(format!(
                    "joint {i}: axis is not unit length"
                )));
            }
            links.push(Link {
                offset: l.offset.to_pose()?,
                axis: Unit::new_normalize(axis),
                limits: l.limits.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]),
            });
        }
        let q_default = file
            .q_default
            .clone()
            .unwrap_or_else(|| vec![0.0; links.len()]);
        Self::new(file.base.to_pose()?, links, file.tool.to_pose()?, q_default)
    }

    pub fn from_json(text: &str) -> Result<Self, WholeBodyError> {
        let file: ChainFile = serde_json::from_str(text)
            .map_err(|e| WholeBodyError::MalformedChain(e.to_string()))?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            base: PoseJson::from_pose(&self.base),
            links: self
                .links
                .iter()
                .map(|l| LinkFile {
                    offset: PoseJson::from_pose(&l.offset),
                    axis: [l.axis.x, l.axis.y, l.axis.z],
                    limits: l.limits.iter().all(|x| x.is_finite()).then_some(l.limits),
                })
                .collect(),
            tool: PoseJson::from_pose(&self.tool),
            q_default: Some(self.q_default.clone()),
        }
    }

    /// A six-joint desk-scale arm: yaw, two pitch joints, wrist roll, wrist
    /// pitch and flange roll, with the default pose bent away from the
    /// stretched-up singularity.
    pub fn desk_arm() -> Self {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        let link = |dz: f64, axis, lim: f64| Link {
            offset: SE3Pose::from_translation(0.0, 0.0, dz),
            axis,
            limits: [-lim, lim],
        };
        Self::new(
            SE3Pose::identity(),
            vec![
                link(0.12, z, 2.6),
                link(0.0, y, 2.0),
                link(0.28, y, 2.6),
                link(0.25, z, 2.9),
                link(0.0, y, 1.9),
                link(0.08, z, 2.9),
            ],
            SE3Pose::from_translation(0.0, 0.0, 0.1),
            vec![0.0, 0.6, 1.2, 0.0, 0.6, 0.0],
        )
        .expect("built-in chain is valid")
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (v, l) in q.iter_mut().zip(&self.links) {
            *v = v.clamp(l.limits[0], l.limits[1]);
        }
    }

    /// `q_default + dq`, clamped to the joint limits.
    pub fn pd_target(&self, dq: &[f64]) -> Result<Vec<f64>, WholeBodyError> {
        let limits: Vec<[f64; 2]> = self.links.iter().map(|l| l.limits).collect();
        pd_target(&self.q_default, dq, &limits)
    }
}

/// Elementwise `q_default + dq`, clamped to per-joint `[lower, upper]`.
pub fn pd_target(
    q_default: &[f64],
    dq: &[f64],
    limits: &[[f64; 2]],
) -> Result<Vec<f64>, WholeBodyError> {
    check_len("joint offsets", q_default.len(), dq.len())?;
    check_len("joint limits", q_default.len(), limits.len())?;
    Ok(q_default
        .iter()
        .zip(dq)
        .zip(limits)
        .map(|((q, d), [lo, hi])| (q + d).clamp(*lo, *hi))
        .collect())
}

/// `base * prod_i(offset_i * rot(axis_i, q_i)) * tool`.
pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<SE3Pose, WholeBodyError> {
    check_len("joint vector", chain.dof(), q.len())?;
    if q.iter().any(|x| !x.is_finite()) {
        return Err(WholeBodyError::NonFinite("joint vector"));
    }
    let mut t = chain.base;
    for (link, &qi) in chain.links.iter().zip(q) {
        let joint = SE3Pose::from_rotation(UnitQuaternion::from_axis_angle(&link.axis, qi));
        t = t.compose(&link.offset).compose(&joint);
    }
    Ok(t.compose(&chain.tool))
}

/// Rotation vector of `r1 * r0^T`, expressed in the world frame.
pub(crate) fn rotation_log(r1: &UnitQuaternion<f64>, r0: &UnitQuaternion<f64>) -> Vector3<f64> {
    (r1 * r0.inverse()).scaled_axis()
}

/// 6 x n Jacobian by central differences: position rows in m/rad, angular
/// rows (world frame) in rad/rad.
pub fn jacobian_fd(
    chain: &KinematicChain,
    q: &[f64],
    eps: f64,
) -> Result<DMatrix<f64>, WholeBodyError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(WholeBodyError::InvalidParams(format!(
            "eps must be positive, got {eps}"
        )));
    }
    check_len("joint vector", chain.dof(), q.len())?;
    let mut jac = DMatrix::zeros(6, q.len());
    let mut qp = q.to_vec();
    let mut qm = q.to_vec();
    for j in 0..q.len() {
        qp[j] = q[j] + eps;
        qm[j] = q[j] - eps;
        let tp = forward_kinematics(chain, &qp)?;
        let tm = forward_kinematics(chain, &qm)?;
        let dp = (tp.position() - tm.position()) / (2.0 * eps);
        let dr = rotation_log(tp.rotation(), tm.rotation()) / (2.0 * eps);
        for r in 0..3 {
            jac[(r, j)] = dp[r];
            jac[(r + 3, j)] = dr[r];
        }
        qp[j] = q[j];
        qm[j] = q[j];
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn single_z(offset: SE3Pose, tool: SE3Pose) -> KinematicChain {
        KinematicChain::new(
            SE3Pose::identity(),
            vec![Link {
                offset,
                axis: Vector3::z_axis(),
                limits: [-3.0, 3.0],
            }],
            tool,
            vec![0.0],
        )
        .unwrap()
    }

    fn homogeneous(p: &SE3Pose) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&p.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(p.position());
        m
    }

    /// Rodrigues rotation about a unit axis.
    fn rodrigues(axis: &Vector3<f64>, q: f64) -> Matrix4<f64> {
        let k = axis.cross_matrix();
        let r = nalgebra::Matrix3::identity() + k * q.sin() + k * k * (1.0 - q.cos());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m
    }

    #[test]
    fn single_joint_quarter_turn() {
        let chain = single_z(
            SE3Pose::identity(),
            SE3Pose::from_translation(1.0, 0.0, 0.0),
        );
        let tcp = forward_kinematics(&chain, &[FRAC_PI_2]).unwrap();
        let p = tcp.position();
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        let expect = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        assert!(tcp.rotation().angle_to(&expect) < 1e-15);
    }

    #[test]
    fn home_pose_is_offset_product() {
        let chain = KinematicChain::desk_arm();
        let home = forward_kinematics(&chain, &[0.0; 6]).unwrap();
        assert!((home.position() - Vector3::new(0.0, 0.0, 0.83)).norm() < 1e-15);
        assert!(home.rotation().angle() < 1e-15);
    }

    #[test]
    fn fk_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let rand_pose = |rng: &mut ChaCha8Rng| {
                let axis = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                SE3Pose::new(
                    Vector3::new(
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                    ),
                    UnitQuaternion::from_scaled_axis(axis),
                )
            };
            let links: Vec<Link> = (0..n)
                .map(|_| Link {
                    offset: rand_pose(&mut rng),
                    axis: Unit::new_normalize(Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.1..1.0),
                    )),
                    limits: [-4.0, 4.0],
                })
                .collect();
            let chain = KinematicChain::new(
                rand_pose(&mut rng),
                links,
                rand_pose(&mut rng),
                vec![0.0; n],
            )
            .unwrap();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut m = homogeneous(&chain.base);
            for (l, qi) in chain.links.iter().zip(&q) {
                m = m * homogeneous(&l.offset) * rodrigues(&l.axis, *qi);
            }
            m *= homogeneous(&chain.tool);
            let got = homogeneous(&forward_kinematics(&chain, &q).unwrap());
            assert!((got - m).abs().max() < 1e-12);
        }
    }

    #[test]
    fn single_joint_jacobian() {
        let chain = single_z(
            SE3Pose::identity(),
            SE3Pose::from_translation(1.0, 0.0, 0.0),
        );
        let j = jacobian_fd(&chain, &[0.0], 1e-6).unwrap();
        let col: Vec<f64> = j.column(0).iter().copied().collect();
        for (got, want) in col.iter().zip([0.0, 1.0, 0.0, 0.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-6, "{col:?}");
        }
        let at_joint = single_z(SE3Pose::identity(), SE3Pose::identity());
        let j = jacobian_fd(&at_joint, &[0.7], 1e-6).unwrap();
        assert!(j.fixed_view::<3, 1>(0, 0).norm() < 1e-12);
    }

    #[test]
    fn planar_two_link_jacobian() {
        let (l1, l2) = (0.7, 0.4);
        let link = |dx: f64| Link {
            offset: SE3Pose::from_translation(dx, 0.0, 0.0),
            axis: Vector3::z_axis(),
            limits: [-4.0, 4.0],
        };
        let chain = KinematicChain::new(
            SE3Pose::identity(),
            vec![link(0.0), link(l1)],
            SE3Pose::from_translation(l2, 0.0, 0.0),
            vec![0.0; 2],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let (a, b) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let j = jacobian_fd(&chain, &[a, b], 1e-6).unwrap();
            let (s1, c1, s12, c12) = (f64::sin(a), f64::cos(a), f64::sin(a + b), f64::cos(a + b));
            let expect = [
                [-l1 * s1 - l2 * s12, -l2 * s12],
                [l1 * c1 + l2 * c12, l2 * c12],
                [0.0, 0.0],
                [0.0, 0.0],
                [0.0, 0.0],
                [1.0, 1.0],
            ];
            for (r, row) in expect.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    assert!((j[(r, c)] - v).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn jacobian_step_refinement() {
        let chain = KinematicChain::desk_arm();
        let q = [0.3, 0.5, 0.9, -0.4, 0.7, 0.2];
        let eps = 1e-3;
        let coarse = jacobian_fd(&chain, &q, eps).unwrap();
        let fine = jacobian_fd(&chain, &q, eps / 2.0).unwrap();
        assert!((coarse - fine).abs().max() < 10.0 * eps * eps);
    }

    #[test]
    fn pd_target_clamps() {
        assert_eq!(
            pd_target(&[0.2, 0.3], &[0.0, 0.0], &[[-1.0, 1.0]; 2]).unwrap(),
            vec![0.2, 0.3]
        );
        assert_eq!(
            pd_target(&[0.0; 2], &[0.1, 0.1], &[[-1.0, 1.0]; 2]).unwrap(),
            vec![0.1, 0.1]
        );
        assert_eq!(
            pd_target(&[0.5, 0.0], &[0.8, -3.0], &[[-1.0, 1.0]; 2]).unwrap(),
            vec![1.0, -1.0]
        );
        assert!(matches!(
            pd_target(&[0.0; 2], &[0.0; 3], &[[-1.0, 1.0]; 2]),
            Err(WholeBodyError::DimensionMismatch { .. })
        ));
        let arm = KinematicChain::desk_arm();
        assert_eq!(arm.pd_target(&[0.0; 6]).unwrap(), arm.q_default);
    }

    #[test]
    fn chain_file_roundtrip() {
        let arm = KinematicChain::desk_arm();
        let text = serde_json::to_string(&arm.to_file()).unwrap();
        assert_eq!(KinematicChain::from_json(&text).unwrap(), arm);
        let minimal = r#"{"links":[{"offset":{"p":[0,0,0.1],"q":[1,0,0,0]},"axis":[0,0,1]}]}"#;
        let c = KinematicChain::from_json(minimal).unwrap();
        assert_eq!(c.q_default, vec![0.0]);
        assert_eq!(c.links[0].limits, [f64::NEG_INFINITY, f64::INFINITY]);
        assert!(KinematicChain::from_json(r#"{"links":[]}"#).is_err());
        assert!(KinematicChain::from_json(
            r#"{"links":[{"offset":{"p":[0,0,0],"q":[1,0,0,0]},"axis":[0,0,2]}]}"#
        )
        .is_err());
        assert!(forward_kinematics(&arm, &[0.0; 5]).is_err());
    }
}
