//! Hand-track trajectory generation: keyframes at hand-speed troughs,
//! retargeting from the camera-frame hand to the world-frame TCP, and
//! fixed-rate resampling.

mod io;
mod online;

use thiserror::Error;

use crate::geometry::{lerp3, se3_compose, slerp, GeometryError, SE3Pose};

pub use io::{
    read_calibration, read_pose_csv, read_tcp_csv, write_pose_csv, write_tcp_csv, Calibration,
    CalibrationFile, POSE_CSV_HEADER,
};
pub use online::OnlineGenerator;

/// Consumption rate of the whole-body controller.
pub const DEFAULT_RATE: f64 = 50.0;

/// Grid times this close to the final input time are snapped onto it.
const END_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandtrackError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps must be finite and strictly increasing (sample {0})")]
    NonIncreasingTime(usize),
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("invalid keyframe parameters: {0}")]
    InvalidParams(String),
    #[error("malformed trajectory file: {0}")]
    MalformedCsv(String),
    #[error("malformed calibration: {0}")]
    MalformedCalibration(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: SE3Pose,
}

impl TimedPose {
    pub fn new(t: f64, pose: SE3Pose) -> Self {
        Self { t, pose }
    }
}

/// Camera-frame hand poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    samples: Vec<TimedPose>,
}

impl HandTrajectory {
    pub fn new(samples: Vec<TimedPose>) -> Result<Self, HandtrackError> {
        if samples.len() < 2 {
            return Err(HandtrackError::TooFewSamples(samples.len()));
        }
        check_times(&samples)?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TimedPose] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn check_times(samples: &[TimedPose]) -> Result<(), HandtrackError> {
    for (i, s) in samples.iter().enumerate() {
        if !s.t.is_finite() || (i > 0 && s.t <= samples[i - 1].t) {
            return Err(HandtrackError::NonIncreasingTime(i));
        }
    }
    Ok(())
}

/// World-frame TCP targets on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpTrajectory {
    pub rate: f64,
    pub samples: Vec<TimedPose>,
}

impl TcpTrajectory {
    /// True when consecutive samples are `1/rate` apart within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let dt = 1.0 / self.rate;
        self.samples
            .windows(2)
            .all(|w| (w[1].t - w[0].t - dt).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyframeParams {
    /// Moving-average window in samples; odd.
    pub window: usize,
    /// Troughs must be slower than this, in m/s.
    pub threshold: f64,
    /// Minimum index distance between accepted troughs.
    pub min_separation: usize,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        Self {
            window: 5,
            threshold: 0.05,
            min_separation: 10,
        }
    }
}

impl KeyframeParams {
    pub fn validate(&self) -> Result<(), HandtrackError> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(HandtrackError::InvalidParams(format!(
                "window must be odd, got {}",
                self.window
            )));
        }
        if !self.threshold.is_finite() {
            return Err(HandtrackError::InvalidParams(
                "threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Unsmoothed finite-difference hand speed, one value per consecutive pair.
pub fn raw_speed(traj: &HandTrajectory) -> Vec<f64> {
    traj.samples
        .windows(2)
        .map(|w| (w[1].pose.position() - w[0].pose.position()).norm() / (w[1].t - w[0].t))
        .collect()
}

/// Centered moving average of `values[i]` over the window, truncated at
/// whatever part of `values` exists.
fn smoothed_at(values: &[f64], i: usize, half: usize) -> f64 {
    let lo = i.saturating_sub(half);
    let hi = (i + half).min(values.len() - 1);
    values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

/// Edge-truncated centered moving average with an odd `window`.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| smoothed_at(values, i, half))
        .collect()
}

/// Smoothed hand speed as `(t_i, speed_i)` for every sample but the last.
pub fn hand_speed(traj: &HandTrajectory, window: usize) -> Vec<(f64, f64)> {
    let speed = smooth(&raw_speed(traj), window);
    traj.samples
        .iter()
        .zip(speed)
        .map(|(s, v)| (s.t, v))
        .collect()
}

/// Trough rule shared by the offline and online selectors.
fn is_trough(prev: f64, cur: f64, next: f64, threshold: f64) -> bool {
    cur < prev && cur <= next && cur < threshold
}

/// Keyframe indices from an already-smoothed speed profile of a trajectory
/// with `speed.len() + 1` samples.
pub fn keyframes_from_speed(speed: &[f64], params: &KeyframeParams) -> Vec<usize> {
    let last = speed.len();
    let mut out = vec![0];
    let mut last_trough: Option<usize> = None;
    for j in 1..speed.len().saturating_sub(1) {
        if !is_trough(speed[j - 1], speed[j], speed[j + 1], params.threshold) {
            continue;
        }
        if last_trough.is_some_and(|k| j - k < params.min_separation) {
            continue;
        }
        last_trough = Some(j);
        out.push(j);
    }
    if last != 0 {
        out.push(last);
    }
    out.dedup();
    out
}

/// Sample indices where the smoothed hand speed has a slow local minimum,
/// plus the first and last sample.
pub fn select_keyframes(
    traj: &HandTrajectory,
    params: &KeyframeParams,
) -> Result<Vec<usize>, HandtrackError> {
    params.validate()?;
    let speed = smooth(&raw_speed(traj), params.window);
    Ok(keyframes_from_speed(&speed, params))
}

/// Maps a camera-frame hand pose to the world-frame TCP target.
pub fn retarget(h: &SE3Pose, t_cam_to_world: &SE3Pose, t_tcp_hand: &SE3Pose) -> SE3Pose {
    se3_compose(&se3_compose(t_cam_to_world, h), t_tcp_hand)
}

fn interpolate(a: &TimedPose, b: &TimedPose, t: f64) -> SE3Pose {
    if t == a.t {
        return a.pose;
    }
    let u = (t - a.t) / (b.t - a.t);
    SE3Pose::new(
        lerp3(a.pose.position(), b.pose.position(), u),
        slerp(a.pose.rotation(), b.pose.rotation(), u),
    )
}

/// Walks the output grid `t0 + k / rate` across consecutive input segments.
#[derive(Debug, Clone)]
pub(crate) struct GridCursor {
    t0: f64,
    rate: f64,
    k: u64,
}

impl GridCursor {
    pub(crate) fn new(t0: f64, rate: f64) -> Self {
        Self { t0, rate, k: 0 }
    }

    fn time(&self) -> f64 {
        self.t0 + self.k as f64 / self.rate
    }

    /// Emits grid samples in `[a.t, b.t)` interpolated on segment `a..b`.
    pub(crate) fn emit_segment(&mut self, a: &TimedPose, b: &TimedPose, out: &mut Vec<TimedPose>) {
        loop {
            let t = self.time();
            if t >= b.t {
                break;
            }
            out.push(TimedPose::new(t, interpolate(a, b, t)));
            self.k += 1;
        }
    }

    /// Emits the rest of the final segment, then `b`'s pose at the first
    /// grid time not before `b.t`.
    pub(crate) fn finish(&mut self, a: &TimedPose, b: &TimedPose, out: &mut Vec<TimedPose>) {
        loop {
            let t = self.time();
            if t >= b.t - END_SNAP {
                break;
            }
            out.push(TimedPose::new(t, interpolate(a, b, t)));
            self.k += 1;
        }
        let t = self.time();
        let t = if t - b.t <= END_SNAP { b.t } else { t };
        out.push(TimedPose::new(t, b.pose));
    }
}

fn check_rate(rate: f64) -> Result<(), HandtrackError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(HandtrackError::InvalidRate(rate))
    }
}

/// Resamples poses onto `t_0 + k / rate`. The grid runs until it reaches
/// the final input time; an off-grid end is held at the next grid time.
/// Positions are interpolated linearly and rotations along the
/// shortest arc.
pub fn resample(poses: &[TimedPose], rate: f64) -> Result<TcpTrajectory, HandtrackError> {
    if poses.len() < 2 {
        return Err(HandtrackError::TooFewSamples(poses.len()));
    }
    check_rate(rate)?;
    check_times(poses)?;
    let mut cursor = GridCursor::new(poses[0].t, rate);
    let mut out = Vec::new();
    let n = poses.len();
    for w in poses[..n - 1].windows(2) {
        cursor.emit_segment(&w[0], &w[1], &mut out);
    }
    cursor.finish(&poses[n - 2], &poses[n - 1], &mut out);
    Ok(TcpTrajectory { rate, samples: out })
}

/// Keyframes, retargeting and resampling in one pass.
pub fn generate_tcp_trajectory(
    traj: &HandTrajectory,
    calib: &Calibration,
    params: &KeyframeParams,
    rate: f64,
) -> Result<TcpTrajectory, HandtrackError> {
    check_rate(rate)?;
    let keys = select_keyframes(traj, params)?;
    let poses: Vec<TimedPose> = keys
        .iter()
        .map(|&i| {
            let s = &traj.samples[i];
            TimedPose::new(s.t, calib.apply(&s.pose))
        })
        .collect();
    resample(&poses, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix4, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn line(n: usize, dt: f64, speed: f64) -> HandTrajectory {
        HandTrajectory::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    TimedPose::new(t, SE3Pose::from_translation(speed * t, 0.0, 0.0))
                })
                .collect(),
        )
        .unwrap()
    }

    /// 1D trajectory whose finite-difference speed is exactly `profile`.
    fn from_profile(profile: &[f64]) -> HandTrajectory {
        let mut x = 0.0;
        let mut samples = vec![TimedPose::new(0.0, SE3Pose::identity())];
        for (i, v) in profile.iter().enumerate() {
            x += v;
            samples.push(TimedPose::new(
                (i + 1) as f64,
                SE3Pose::from_translation(x, 0.0, 0.0),
            ));
        }
        HandTrajectory::new(samples).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> SE3Pose {
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        SE3Pose::new(
            Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
            UnitQuaternion::from_scaled_axis(axis * 3.0),
        )
    }

    fn homogeneous(p: &SE3Pose) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&p.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(p.position());
        m
    }

    #[test]
    fn trajectory_validation() {
        assert_eq!(
            HandTrajectory::new(vec![TimedPose::new(0.0, SE3Pose::identity())]),
            Err(HandtrackError::TooFewSamples(1))
        );
        let same_t = vec![TimedPose::new(0.0, SE3Pose::identity()); 2];
        assert_eq!(
            HandTrajectory::new(same_t),
            Err(HandtrackError::NonIncreasingTime(1))
        );
    }

    #[test]
    fn stationary_speed_is_zero() {
        let speed = hand_speed(&line(12, 0.1, 0.0), 5);
        assert_eq!(speed.len(), 11);
        assert!(speed.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn uniform_motion_speed() {
        let traj = line(30, 1.0 / 30.0, 0.2);
        for (i, (t, v)) in hand_speed(&traj, 5).into_iter().enumerate() {
            assert_eq!(t, traj.samples()[i].t);
            assert!((v - 0.2).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn unit_window_is_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = 0.0;
        let samples: Vec<TimedPose> = (0..40)
            .map(|_| {
                t += rng.gen_range(0.01..0.1);
                TimedPose::new(t, random_pose(&mut rng))
            })
            .collect();
        let traj = HandTrajectory::new(samples.clone()).unwrap();
        let speed = hand_speed(&traj, 1);
        for i in 0..samples.len() - 1 {
            let d = samples[i + 1].pose.position() - samples[i].pose.position();
            let expect = d.norm() / (samples[i + 1].t - samples[i].t);
            assert_eq!(speed[i].1, expect);
        }
    }

    #[test]
    fn edge_truncated_average() {
        assert_eq!(smooth(&[3.0, 0.0, 0.0, 6.0], 3), vec![1.5, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn increasing_speed_has_no_troughs() {
        let profile: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let keys = select_keyframes(&from_profile(&profile), &KeyframeParams::default()).unwrap();
        assert_eq!(keys, vec![0, 50]);
    }

    #[test]
    fn two_valleys() {
        let profile: Vec<f64> = (0..80i32)
            .map(|i| {
                let d = (i - 20).abs().min((i - 60).abs()) as f64;
                (0.02 * d).min(0.3)
            })
            .collect();
        let params = KeyframeParams {
            window: 1,
            ..Default::default()
        };
        let keys = select_keyframes(&from_profile(&profile), &params).unwrap();
        assert_eq!(keys, vec![0, 20, 60, 80]);
    }

    #[test]
    fn close_troughs_keep_earlier() {
        let mut profile = vec![0.3; 30];
        profile[10] = 0.01;
        profile[13] = 0.0;
        let params = KeyframeParams {
            window: 1,
            ..Default::default()
        };
        assert_eq!(
            select_keyframes(&from_profile(&profile), &params).unwrap(),
            vec![0, 10, 30]
        );
    }

    #[test]
    fn even_window_rejected() {
        let params = KeyframeParams {
            window: 4,
            ..Default::default()
        };
        assert!(select_keyframes(&line(5, 0.1, 0.1), &params).is_err());
    }

    #[test]
    fn retarget_identity_and_translation() {
        let id = SE3Pose::identity();
        assert_eq!(retarget(&id, &id, &id), id);
        let out = retarget(
            &SE3Pose::from_translation(1.0, 0.0, 0.0),
            &SE3Pose::from_translation(0.0, 0.0, 1.0),
            &id,
        );
        assert_eq!(out.position_array(), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn retarget_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (h, c, t) = (
                random_pose(&mut rng),
                random_pose(&mut rng),
                random_pose(&mut rng),
            );
            let got = homogeneous(&retarget(&h, &c, &t));
            let expect = homogeneous(&c) * homogeneous(&h) * homogeneous(&t);
            assert!((got - expect).abs().max() < 1e-12);
        }
    }

    #[test]
    fn resample_counts_and_interpolates() {
        let a = TimedPose::new(0.0, SE3Pose::identity());
        let b = TimedPose::new(
            1.0,
            SE3Pose::new(
                Vector3::new(1.0, 0.0, 0.0),
                UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2),
            ),
        );
        let out = resample(&[a, b], 50.0).unwrap();
        assert_eq!(out.samples.len(), 51);
        assert!(out.is_uniform(1e-9));
        let mid = out.samples[25];
        assert!((mid.t - 0.5).abs() < 1e-12);
        assert_relative_eq!(mid.pose.position().x, 0.5, epsilon = 1e-12);
        let half = UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2 / 2.0);
        assert!(crate::geometry::geodesic_angle(mid.pose.rotation(), &half) < 1e-9);
        assert_eq!(out.samples[0], a);
        assert_eq!(out.samples[50], b);
    }

    #[test]
    fn off_grid_end_is_held_on_the_grid() {
        let a = TimedPose::new(0.0, SE3Pose::identity());
        let b = TimedPose::new(0.05, SE3Pose::from_translation(1.0, 0.0, 0.0));
        let out = resample(&[a, b], 50.0).unwrap();
        let times: Vec<f64> = out.samples.iter().map(|s| s.t).collect();
        assert_eq!(times, vec![0.0, 0.02, 0.04, 0.06]);
        assert_eq!(out.samples[3].pose, b.pose);
        assert!(out.is_uniform(1e-9));
    }

    #[test]
    fn resample_errors() {
        let a = TimedPose::new(0.0, SE3Pose::identity());
        assert_eq!(resample(&[a], 50.0), Err(HandtrackError::TooFewSamples(1)));
        let b = TimedPose::new(1.0, SE3Pose::identity());
        assert_eq!(
            resample(&[a, b], 0.0),
            Err(HandtrackError::InvalidRate(0.0))
        );
    }

    #[test]
    fn stationary_hand_gives_constant_output() {
        let p = SE3Pose::new(
            Vector3::new(0.3, -0.2, 0.9),
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
        );
        let traj = HandTrajectory::new(
            (0..30)
                .map(|i| TimedPose::new(i as f64 / 30.0, p))
                .collect(),
        )
        .unwrap();
        let out = generate_tcp_trajectory(
            &traj,
            &Calibration::identity(),
            &KeyframeParams::default(),
            50.0,
        )
        .unwrap();
        for s in &out.samples {
            assert!((s.pose.position() - p.position()).norm() < 1e-12);
            assert!(crate::geometry::geodesic_angle(s.pose.rotation(), p.rotation()) < 1e-9);
        }
        assert_eq!(out.samples.len(), 50);
        assert!(out.is_uniform(1e-9));
    }
}
