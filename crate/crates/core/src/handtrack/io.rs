//! Trajectory CSV and calibration JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{retarget, HandtrackError, TcpTrajectory, TimedPose};
use crate::geometry::{PoseJson, SE3Pose};

pub const POSE_CSV_HEADER: [&str; 8] = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub t_cam_to_world: PoseJson,
    pub t_tcp_hand: PoseJson,
}

/// Camera extrinsics and the fixed hand-to-TCP offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub cam_to_world: SE3Pose,
    pub tcp_hand: SE3Pose,
}

impl Calibration {
    pub fn identity() -> Self {
        Self {
            cam_to_world: SE3Pose::identity(),
            tcp_hand: SE3Pose::identity(),
        }
    }

    pub fn apply(&self, hand: &SE3Pose) -> SE3Pose {
        retarget(hand, &self.cam_to_world, &self.tcp_hand)
    }

    pub fn to_file(&self) -> CalibrationFile {
        CalibrationFile {
            t_cam_to_world: PoseJson::from_pose(&self.cam_to_world),
            t_tcp_hand: PoseJson::from_pose(&self.tcp_hand),
        }
    }
}

pub fn read_calibration(text: &str) -> Result<Calibration, HandtrackError> {
    let file: CalibrationFile = serde_json::from_str(text)
        .map_err(|e| HandtrackError::MalformedCalibration(e.to_string()))?;
    let bad =
        |e: crate::geometry::GeometryError| HandtrackError::MalformedCalibration(e.to_string());
    Ok(Calibration {
        cam_to_world: file.t_cam_to_world.to_pose().map_err(bad)?,
        tcp_hand: file.t_tcp_hand.to_pose().map_err(bad)?,
    })
}

fn csv_err(e: impl std::fmt::Display) -> HandtrackError {
    HandtrackError::MalformedCsv(e.to_string())
}

/// Reads `t,px,py,pz,qw,qx,qy,qz` rows. Lines starting with `#` carry
/// metadata and are skipped.
pub fn read_pose_csv(reader: impl Read) -> Result<Vec<TimedPose>, HandtrackError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(POSE_CSV_HEADER) {
        return Err(csv_err(format!(
            "header must be {}, got {}",
            POSE_CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let v: Vec<f64> = row
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| csv_err(format!("row {}: {e}", i + 1)))?;
        let pose = SE3Pose::from_arrays([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]])
            .map_err(|e| csv_err(format!("row {}: {e}", i + 1)))?;
        out.push(TimedPose::new(v[0], pose));
    }
    Ok(out)
}

/// Writes poses in the CSV schema, preceded by `# rate=<hz>` when given.
pub fn write_pose_csv(
    mut writer: impl Write,
    samples: &[TimedPose],
    rate: Option<f64>,
) -> Result<(), HandtrackError> {
    if let Some(rate) = rate {
        writeln!(writer, "# rate={rate}").map_err(csv_err)?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(POSE_CSV_HEADER).map_err(csv_err)?;
    for s in samples {
        let p = s.pose.position_array();
        let q = s.pose.quaternion_wxyz();
        // `+ 0.0` prints negative zero as 0.
        let fields = [s.t, p[0], p[1], p[2], q[0], q[1], q[2], q[3]].map(|x| (x + 0.0).to_string());
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn write_tcp_csv(writer: impl Write, traj: &TcpTrajectory) -> Result<(), HandtrackError> {
    write_pose_csv(writer, &traj.samples, Some(traj.rate))
}

/// Reads a TCP trajectory written by [`write_tcp_csv`]; the rate comes from
/// the `# rate=` line.
pub fn read_tcp_csv(text: &str) -> Result<TcpTrajectory, HandtrackError> {
    let rate = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("rate="))
        .ok_or_else(|| csv_err("missing '# rate=' line"))?
        .trim()
        .parse::<f64>()
        .map_err(csv_err)?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(HandtrackError::InvalidRate(rate));
    }
    let samples = read_pose_csv(text.as_bytes())?;
    Ok(TcpTrajectory { rate, samples })
}
