//! `loconav nav`: batch navigation episodes.

use std::fmt::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use loconav::navigator::{
    run_episode, true_targets, EpisodeResult, NavConfig, NavError, PoseRecord,
};
use loconav::reasoner::{FallbackReasoner, MockReasoner, ReasonerError, WireReasoner};
use loconav::scenegraph::{Goal, GoalSpec};
use loconav::world::{random_start, RobotPose, ScenarioFile, SensorConfig, WorldModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, TOOL_VERSION};
use crate::error::{read_input, write_output, CliError};
use crate::{svg, Common};

#[derive(Debug, Args)]
pub struct NavArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scenario JSON: world layout, robot start, sensor.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Goal graph JSON.
    #[arg(long)]
    pub goal: PathBuf,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Episode 0 starts at the scenario start; later ones at random free
    /// cells drawn from the seed.
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Base URL of an external reasoner service; the built-in mock is used
    /// when absent.
    #[arg(long)]
    pub reasoner_url: Option<String>,
    /// Answer from the mock whenever the external reasoner is unavailable.
    #[arg(long)]
    pub reasoner_fallback: bool,
    /// Skip the per-episode pose CSV and SVG files.
    #[arg(long)]
    pub no_traces: bool,
}

#[derive(Serialize)]
struct EpisodeLine<'a> {
    episode: usize,
    start: [f64; 3],
    reasoner_fallbacks: usize,
    #[serde(flatten)]
    result: &'a EpisodeResult,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReasonerMeta<'a> {
    Mock,
    Service { url: &'a str, fallback: bool },
}

#[derive(Serialize)]
struct Summary {
    episodes: usize,
    successes: usize,
    success_rate: f64,
    mean_spl: f64,
    mean_path_length: f64,
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    episodes: usize,
    reasoner: ReasonerMeta<'a>,
    nav: &'a NavConfig,
    scenario: &'a ScenarioFile,
    goal: &'a GoalSpec,
    starts: Vec<[f64; 3]>,
    summary: Summary,
}

struct Outcome {
    result: EpisodeResult,
    fallbacks: usize,
}

fn run_one(
    world: &Arc<WorldModel>,
    goal: &Goal,
    start: RobotPose,
    sensor: &SensorConfig,
    cfg: &NavConfig,
    url: Option<&str>,
    fallback: bool,
) -> Result<Outcome, NavError> {
    let mock = MockReasoner::new(world.clone(), *sensor).with_graph_params(cfg.d_near, cfg.d_merge);
    match url {
        None => {
            let mut r = mock;
            let result = run_episode(world, goal, start, sensor, cfg, &mut r)?;
            Ok(Outcome {
                result,
                fallbacks: 0,
            })
        }
        Some(url) if fallback => {
            let mut r = FallbackReasoner::new(WireReasoner::new(url), mock);
            let result = run_episode(world, goal, start, sensor, cfg, &mut r)?;
            Ok(Outcome {
                result,
                fallbacks: r.fallbacks_used,
            })
        }
        Some(url) => {
            let mut r = WireReasoner::new(url);
            let result = run_episode(world, goal, start, sensor, cfg, &mut r)?;
            Ok(Outcome {
                result,
                fallbacks: 0,
            })
        }
    }
}

fn pose_csv(trace: &[PoseRecord]) -> String {
    let mut s = String::from("step,t,x,y,heading\n");
    for p in trace {
        writeln!(s, "{},{},{},{},{}", p.step, p.t, p.x, p.y, p.heading).unwrap();
    }
    s
}

fn start_array(p: &RobotPose) -> [f64; 3] {
    [p.x, p.y, p.heading]
}

pub fn run(args: NavArgs) -> Result<(), CliError> {
    let common = &args.common;
    let mut file_cfg = config::load(common.config.as_deref())?;
    let cfg = &mut file_cfg.nav;
    if let Some(v) = args.sigma1 {
        cfg.sigma1 = v;
    }
    if let Some(v) = args.sigma2 {
        cfg.sigma2 = v;
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = v;
    }
    cfg.validate().map_err(CliError::input)?;
    if args.episodes == 0 || common.jobs == 0 {
        return Err(CliError::Input(
            "--episodes and --jobs must be at least 1".into(),
        ));
    }
    let cfg = file_cfg.nav.clone();

    let scenario_file = ScenarioFile::from_json(&read_input(&args.scenario)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.scenario.display())))?;
    let scenario = scenario_file
        .build()
        .map_err(|e| CliError::Input(format!("{}: {e}", args.scenario.display())))?;
    let goal_spec = GoalSpec::from_json(&read_input(&args.goal)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.goal.display())))?;
    let goal = goal_spec
        .to_goal()
        .map_err(|e| CliError::Input(format!("{}: {e}", args.goal.display())))?;

    let world = Arc::new(scenario.world);
    let sensor = scenario.sensor;
    let mut starts = vec![scenario.start];
    for i in 1..args.episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
        rng.set_stream(i as u64);
        let start = random_start(&world, &mut rng)
            .ok_or_else(|| CliError::Input("world has no free start cell".into()))?;
        starts.push(start);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let url = args.reasoner_url.as_deref();
    let results: Vec<Result<Outcome, NavError>> = pool.install(|| {
        starts
            .par_iter()
            .map(|s| {
                run_one(
                    &world,
                    &goal,
                    *s,
                    &sensor,
                    &cfg,
                    url,
                    args.reasoner_fallback,
                )
            })
            .collect()
    });

    let mut outcomes = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(NavError::Reasoner(ReasonerError::Unavailable(m))) => {
                return Err(CliError::ReasonerUnavailable(format!("episode {i}: {m}")))
            }
            Err(e) => return Err(CliError::Internal(format!("episode {i}: {e}"))),
        }
    }

    let mut jsonl = String::new();
    for (i, o) in outcomes.iter().enumerate() {
        let line = EpisodeLine {
            episode: i,
            start: start_array(&starts[i]),
            reasoner_fallbacks: o.fallbacks,
            result: &o.result,
        };
        jsonl.push_str(&serde_json::to_string(&line).expect("episode serializes"));
        jsonl.push('\n');
    }
    write_output(&common.out.join("metrics.jsonl"), jsonl)?;

    if !args.no_traces {
        let targets = true_targets(&world, &goal, cfg.d_near);
        for (i, o) in outcomes.iter().enumerate() {
            let trace = &o.result.pose_trace;
            let dir = common.out.join("traces");
            write_output(
                &dir.join(format!("episode_{i:04}_poses.csv")),
                pose_csv(trace),
            )?;
            let path: Vec<(f64, f64)> = trace.iter().map(|p| (p.x, p.y)).collect();
            let plot = svg::render(&world, &path, Some(&starts[i]), &targets);
            write_output(&dir.join(format!("episode_{i:04}.svg")), plot)?;
        }
    }

    let n = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.result.success).count();
    let summary = Summary {
        episodes: n,
        successes,
        success_rate: successes as f64 / n as f64,
        mean_spl: outcomes.iter().map(|o| o.result.spl).sum::<f64>() / n as f64,
        mean_path_length: outcomes.iter().map(|o| o.result.path_length).sum::<f64>() / n as f64,
    };
    println!(
        "{} episodes, {} succeeded ({:.1}%), mean SPL {:.3}",
        n,
        successes,
        100.0 * summary.success_rate,
        summary.mean_spl
    );
    let meta = Meta {
        tool: "loconav",
        version: TOOL_VERSION,
        command: "nav",
        seed: common.seed,
        episodes: args.episodes,
        reasoner: match url {
            None => ReasonerMeta::Mock,
            Some(url) => ReasonerMeta::Service {
                url,
                fallback: args.reasoner_fallback,
            },
        },
        nav: &cfg,
        scenario: &scenario_file,
        goal: &goal_spec,
        starts: starts.iter().map(start_array).collect(),
        summary,
    };
    write_output(&common.out.join("meta.json"), config::pretty(&meta))
}
