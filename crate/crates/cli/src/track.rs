//! `loconav track`: reference-controller tracking with a reward trace.

use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use loconav::handtrack::read_tcp_csv;
use loconav::wholebody::{
    forward_kinematics, track_reference, tracking_errors, write_reward_csv, ChainFile,
    KinematicChain, TrackConfig, WholeBodyError,
};
use serde::Serialize;

use crate::config::{self, TOOL_VERSION};
use crate::error::{read_input, write_output, CliError};
use crate::Common;

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub common: Common,
    /// Kinematic chain JSON.
    #[arg(long)]
    pub chain: PathBuf,
    /// TCP trajectory CSV at 50 Hz, as written by `handover`.
    #[arg(long)]
    pub traj: PathBuf,
}

#[derive(Serialize)]
struct Summary {
    steps: usize,
    mean_r_track: f64,
    initial_pos_err: f64,
    final_pos_err: f64,
    final_ang_err: f64,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    traj: String,
    chain: ChainFile,
    track: &'a TrackConfig,
    summary: Summary,
}

pub fn run(args: TrackArgs) -> Result<(), CliError> {
    let common = &args.common;
    let cfg = config::load(common.config.as_deref())?.track;
    let chain = KinematicChain::from_json(&read_input(&args.chain)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.chain.display())))?;
    let target = read_tcp_csv(&read_input(&args.traj)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.traj.display())))?;
    if target.samples.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no samples",
            args.traj.display()
        )));
    }

    let q0 = chain.q_default.clone();
    let home = forward_kinematics(&chain, &q0).map_err(CliError::input)?;
    let result = match track_reference(&chain, &q0, &target, &cfg) {
        Ok(r) => r,
        Err(e @ WholeBodyError::RateMismatch { .. }) => {
            return Err(CliError::RateMismatch(e.to_string()))
        }
        Err(e) => return Err(CliError::input(e)),
    };

    let mut csv = Vec::new();
    write_reward_csv(&mut csv, &result.rewards).map_err(|e| CliError::Internal(e.to_string()))?;
    write_output(&common.out.join("rewards.csv"), csv)?;
    let mut joints = String::from("step,t");
    for j in 0..chain.dof() {
        write!(joints, ",q{j}").unwrap();
    }
    joints.push('\n');
    for (k, q) in result.joints.iter().enumerate().skip(1) {
        write!(joints, "{},{}", k - 1, target.samples[k - 1].t).unwrap();
        for v in q {
            write!(joints, ",{v}").unwrap();
        }
        joints.push('\n');
    }
    write_output(&common.out.join("joints.csv"), joints)?;

    let last = result.rewards.last().expect("non-empty trajectory");
    let summary = Summary {
        steps: result.rewards.len(),
        mean_r_track: result.mean_track(),
        initial_pos_err: tracking_errors(&home, &target.samples[0].pose).0,
        final_pos_err: last.pos_err,
        final_ang_err: last.ang_err,
    };
    println!(
        "{} steps, mean r_track {:.4}, final pos_err {:.4} m, final ang_err {:.4} rad",
        summary.steps, summary.mean_r_track, summary.final_pos_err, summary.final_ang_err
    );
    let meta = Meta {
        tool: "loconav",
        version: TOOL_VERSION,
        command: "track",
        seed: common.seed,
        traj: args.traj.display().to_string(),
        chain: chain.to_file(),
        track: &cfg,
        summary,
    };
    write_output(&common.out.join("meta.json"), config::pretty(&meta))
}
