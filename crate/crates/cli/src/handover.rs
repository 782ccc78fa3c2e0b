//! `loconav handover`: hand trajectory to world-frame TCP targets.

use std::path::PathBuf;

use clap::Args;
use loconav::handtrack::{
    generate_tcp_trajectory, read_calibration, read_pose_csv, select_keyframes, write_tcp_csv,
    CalibrationFile, HandTrajectory, KeyframeParams, OnlineGenerator, TcpTrajectory, DEFAULT_RATE,
};
use serde::Serialize;

use crate::config::{self, TOOL_VERSION};
use crate::error::{read_input, write_output, CliError};
use crate::Common;

#[derive(Debug, Args)]
pub struct HandoverArgs {
    #[command(flatten)]
    pub common: Common,
    /// Camera-frame hand poses, CSV `t,px,py,pz,qw,qx,qy,qz`.
    #[arg(long)]
    pub hand: PathBuf,
    /// Calibration JSON with `t_cam_to_world` and `t_tcp_hand`.
    #[arg(long)]
    pub calib: PathBuf,
    /// Output rate in Hz.
    #[arg(long, default_value_t = DEFAULT_RATE)]
    pub rate: f64,
    /// Feed samples one at a time through the incremental generator.
    #[arg(long)]
    pub online: bool,
}

#[derive(Serialize)]
struct Keyframe {
    index: usize,
    t: f64,
}

#[derive(Serialize)]
struct KeyframeReport {
    samples: usize,
    keyframes: Vec<Keyframe>,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    hand: String,
    rate: f64,
    online: bool,
    keyframes: &'a KeyframeParams,
    calibration: CalibrationFile,
    output_samples: usize,
}

pub fn run(args: HandoverArgs) -> Result<(), CliError> {
    let common = &args.common;
    let params = config::load(common.config.as_deref())?.keyframes;
    params.validate().map_err(CliError::input)?;
    let text = read_input(&args.hand)?;
    let samples = read_pose_csv(text.as_bytes())
        .map_err(|e| CliError::Input(format!("{}: {e}", args.hand.display())))?;
    let traj = HandTrajectory::new(samples)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.hand.display())))?;
    let calib = read_calibration(&read_input(&args.calib)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.calib.display())))?;

    let (tcp, keys) = if args.online {
        let mut generator =
            OnlineGenerator::new(calib, params, args.rate).map_err(CliError::input)?;
        let mut out = Vec::new();
        for s in traj.samples() {
            out.extend(generator.push(*s).map_err(CliError::input)?);
        }
        let (tail, keys) = generator.finish().map_err(CliError::input)?;
        out.extend(tail);
        (
            TcpTrajectory {
                rate: args.rate,
                samples: out,
            },
            keys,
        )
    } else {
        let tcp =
            generate_tcp_trajectory(&traj, &calib, &params, args.rate).map_err(CliError::input)?;
        (
            tcp,
            select_keyframes(&traj, &params).map_err(CliError::input)?,
        )
    };

    let mut csv = Vec::new();
    write_tcp_csv(&mut csv, &tcp).map_err(|e| CliError::Internal(e.to_string()))?;
    write_output(&common.out.join("tcp.csv"), csv)?;
    let report = KeyframeReport {
        samples: traj.len(),
        keyframes: keys
            .iter()
            .map(|&index| Keyframe {
                index,
                t: traj.samples()[index].t,
            })
            .collect(),
    };
    write_output(&common.out.join("keyframes.json"), config::pretty(&report))?;
    println!(
        "{} hand samples, {} keyframes {:?}, {} TCP samples at {} Hz",
        traj.len(),
        keys.len(),
        keys,
        tcp.samples.len(),
        tcp.rate
    );
    let meta = Meta {
        tool: "loconav",
        version: TOOL_VERSION,
        command: "handover",
        seed: common.seed,
        hand: args.hand.display().to_string(),
        rate: args.rate,
        online: args.online,
        keyframes: &params,
        calibration: calib.to_file(),
        output_samples: tcp.samples.len(),
    };
    write_output(&common.out.join("meta.json"), config::pretty(&meta))
}
