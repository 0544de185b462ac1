//! The `gen` subcommand: benchmark model generation.

use anyhow::{bail, Result};
use clap::{Args, Subcommand};

use posat_core::benchgen::{
    gen_escape, gen_hallway, gen_rocksample, random_pomdp, EscapeParams, HallwayParams,
    RandomParams, RockSampleParams, RockType,
};
use posat_core::pomdp::{format_pomdp, Pomdp};

/// Parses `x,y`.
fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got `{s}`"));
    }
    let x = parts[0].trim().parse().map_err(|_| format!("bad x in `{s}`"))?;
    let y = parts[1].trim().parse().map_err(|_| format!("bad y in `{s}`"))?;
    Ok((x, y))
}

/// Parses `lo,hi`.
fn parse_range(s: &str) -> Result<(usize, usize), String> {
    parse_cell(s).map_err(|e| e.replace("x,y", "lo,hi"))
}

/// Parses `x,y,good|bad|random`.
fn parse_rock(s: &str) -> Result<((usize, usize), RockType), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,kind but got `{s}`"));
    }
    let x = parts[0].trim().parse().map_err(|_| format!("bad x in `{s}`"))?;
    let y = parts[1].trim().parse().map_err(|_| format!("bad y in `{s}`"))?;
    let kind = match parts[2].trim() {
        "good" => RockType::Good,
        "bad" => RockType::Bad,
        "random" => RockType::Random,
        other => return Err(format!("rock kind `{other}` is not good, bad or random")),
    };
    Ok(((x, y), kind))
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub family: Family,
}

#[derive(Debug, Subcommand)]
pub enum Family {
    /// Grid robot with forward/turn actions, local wall sensing and traps
    Hallway(HallwayArgs),
    /// Pursuit on a square arena with a small escape chance on every move
    Escape(EscapeArgs),
    /// Rover banking samples from rocks of hidden quality
    Rocksample(RockArgs),
    /// Seeded random model for corpus sweeps
    Random(RandomArgs),
}

#[derive(Debug, Args)]
pub struct HallwayArgs {
    /// Named parameter set (`split`); conflicts with explicit geometry
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Barrier cell x,y; repeat for more
    #[arg(long = "barrier", value_parser = parse_cell)]
    barriers: Vec<(usize, usize)>,
    /// Trap cell x,y; repeat for more
    #[arg(long = "trap", value_parser = parse_cell)]
    traps: Vec<(usize, usize)>,
    /// Goal cell x,y
    #[arg(long, value_parser = parse_cell)]
    goal: Option<(usize, usize)>,
    /// Possible start cell x,y; repeat for an uncertain start region
    #[arg(long = "start", value_parser = parse_cell)]
    starts: Vec<(usize, usize)>,
    /// Probability that a move or turn has no effect
    #[arg(long)]
    fail_prob: Option<f64>,
    /// Output path; `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
pub struct EscapeArgs {
    /// Named parameter set (`three`); conflicts with explicit geometry
    #[arg(long)]
    preset: Option<String>,
    /// Arena side length
    #[arg(long)]
    n: Option<usize>,
    /// Robot start cell x,y
    #[arg(long, value_parser = parse_cell)]
    robot: Option<(usize, usize)>,
    /// Agent start cell x,y
    #[arg(long, value_parser = parse_cell)]
    agent: Option<(usize, usize)>,
    /// Obstacle cell x,y neither party can enter
    #[arg(long, value_parser = parse_cell)]
    barrier: Option<(usize, usize)>,
    /// Output path; `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
pub struct RockArgs {
    /// Named parameter set (`two-good` or `four-random`)
    #[arg(long)]
    preset: Option<String>,
    /// Rock as x,y,kind with kind good|bad|random; repeat for more
    #[arg(long = "rock", value_parser = parse_rock)]
    rocks: Vec<((usize, usize), RockType)>,
    /// Rover start cell x,y
    #[arg(long, value_parser = parse_cell)]
    rover: Option<(usize, usize)>,
    /// Output path; `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    /// State count range lo,hi before goal normalization
    #[arg(long, value_parser = parse_range, default_value = "2,5")]
    states: (usize, usize),
    /// Action count range lo,hi
    #[arg(long, value_parser = parse_range, default_value = "1,3")]
    actions: (usize, usize),
    /// Observation count range lo,hi
    #[arg(long, value_parser = parse_range, default_value = "1,3")]
    observations: (usize, usize),
    /// Largest support of a single transition row
    #[arg(long, default_value_t = 3)]
    max_support: usize,
    /// Probability that a non-target state is made absorbing
    #[arg(long, default_value_t = 0.15)]
    trap_bias: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

fn build_hallway(args: &HallwayArgs) -> Result<Pomdp> {
    let params = match args.preset.as_deref() {
        Some("split") => {
            if args.width.is_some()
                || args.height.is_some()
                || args.goal.is_some()
                || args.fail_prob.is_some()
                || !args.barriers.is_empty()
                || !args.traps.is_empty()
                || !args.starts.is_empty()
            {
                bail!("--preset conflicts with explicit parameters");
            }
            HallwayParams::split_fixture()
        }
        Some(other) => bail!("unknown hallway preset `{other}` (try `split`)"),
        None => {
            let (Some(width), Some(height), Some(goal)) = (args.width, args.height, args.goal)
            else {
                bail!("--width, --height and --goal are required without --preset");
            };
            if args.starts.is_empty() {
                bail!("at least one --start cell is required without --preset");
            }
            HallwayParams {
                width,
                height,
                barriers: args.barriers.clone(),
                traps: args.traps.clone(),
                goal,
                initial_region: args.starts.clone(),
                fail_prob: args.fail_prob.unwrap_or(0.2),
            }
        }
    };
    Ok(gen_hallway(&params)?)
}

fn build_escape(args: &EscapeArgs) -> Result<Pomdp> {
    let params = match args.preset.as_deref() {
        Some("three") => {
            if args.n.is_some()
                || args.robot.is_some()
                || args.agent.is_some()
                || args.barrier.is_some()
            {
                bail!("--preset conflicts with explicit parameters");
            }
            EscapeParams::three()
        }
        Some(other) => bail!("unknown escape preset `{other}` (try `three`)"),
        None => {
            let (Some(n), Some(robot), Some(agent)) = (args.n, args.robot, args.agent) else {
                bail!("--n, --robot and --agent are required without --preset");
            };
            EscapeParams {
                n,
                robot,
                agent,
                barrier: args.barrier,
            }
        }
    };
    Ok(gen_escape(&params)?)
}

fn build_rocksample(args: &RockArgs) -> Result<Pomdp> {
    let params = match args.preset.as_deref() {
        Some("two-good") | Some("four-random") => {
            if !args.rocks.is_empty() || args.rover.is_some() {
                bail!("--preset conflicts with explicit parameters");
            }
            if args.preset.as_deref() == Some("two-good") {
                RockSampleParams::two_good()
            } else {
                RockSampleParams::four_random()
            }
        }
        Some(other) => {
            bail!("unknown rocksample preset `{other}` (try `two-good` or `four-random`)")
        }
        None => {
            let Some(rover) = args.rover else {
                bail!("--rover is required without --preset");
            };
            if args.rocks.is_empty() {
                bail!("at least one --rock is required without --preset");
            }
            RockSampleParams {
                rocks: args.rocks.clone(),
                rover,
            }
        }
    };
    Ok(gen_rocksample(&params)?)
}

fn build_random(args: &RandomArgs) -> Result<Pomdp> {
    let params = RandomParams {
        states: args.states,
        actions: args.actions,
        observations: args.observations,
        max_support: args.max_support,
        trap_bias: args.trap_bias,
    };
    Ok(random_pomdp(&params, args.seed))
}

pub fn run(args: &GenArgs) -> Result<i32> {
    let (p, out) = match &args.family {
        Family::Hallway(a) => (build_hallway(a)?, &a.out),
        Family::Escape(a) => (build_escape(a)?, &a.out),
        Family::Rocksample(a) => (build_rocksample(a)?, &a.out),
        Family::Random(a) => (build_random(a)?, &a.out),
    };
    let text = format_pomdp(&p);
    crate::write_text(out, &text)?;
    Ok(0)
}
