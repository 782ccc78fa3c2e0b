//! `loconav gen-world`: random scenario and goal files.

use clap::Args;
use loconav::navigator::true_targets;
use loconav::world::{generate_scenario, ScenarioParams};
use serde::Serialize;

use crate::config::{self, TOOL_VERSION};
use crate::error::{write_output, CliError};
use crate::{svg, Common};

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    scenario: &'a ScenarioParams,
}

pub fn run(args: GenWorldArgs) -> Result<(), CliError> {
    let common = &args.common;
    let params = config::load(common.config.as_deref())?.scenario;
    let (file, goal_spec) = generate_scenario(common.seed, &params).map_err(CliError::input)?;
    let scenario = file
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let goal = goal_spec
        .to_goal()
        .map_err(|e| CliError::Internal(e.to_string()))?;

    write_output(&common.out.join("scenario.json"), config::pretty(&file))?;
    write_output(&common.out.join("goal.json"), config::pretty(&goal_spec))?;
    let targets = true_targets(&scenario.world, &goal, params.d_near);
    let plot = svg::render(&scenario.world, &[], Some(&scenario.start), &targets);
    write_output(&common.out.join("world.svg"), plot)?;
    println!(
        "seed {}: {}x{} cells, {} walls, {} objects, goal with {} node(s)",
        common.seed,
        file.world.width,
        file.world.height,
        file.world.walls.len(),
        file.world.objects.len(),
        goal_spec.nodes.len()
    );
    let meta = Meta {
        tool: "loconav",
        version: TOOL_VERSION,
        command: "gen-world",
        seed: common.seed,
        scenario: &params,
    };
    write_output(&common.out.join("meta.json"), config::pretty(&meta))
}
