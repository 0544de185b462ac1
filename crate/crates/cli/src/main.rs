//! `posat`: decide whether a POMDP admits a small-memory strategy that
//! reaches its goal with probability one, by reduction to SAT.
//!
//! The `solve` subcommand drives the full search: memory sizes
//! ascending, path bounds along a doubling schedule that ends at the
//! conclusive bound `|S|·mu`, each round encoded to CNF, solved, and on
//! success decoded into a strategy that is independently verified
//! before anything is reported.  Verdicts go to stdout, one line per
//! settled memory size; round-by-round details go to stderr.
//!
//! Exit codes: 0 a winning strategy was found, 1 conclusively no
//! strategy within the searched sizes, 2 the search was inconclusive
//! (short schedule or solver budget), 10 any error.

mod gen;
mod report;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;

use posat_core::baseline::{baseline_winning, DEFAULT_NODE_CAP};
use posat_core::cnf::{parse_dimacs, write_dimacs};
use posat_core::encoder::{encode, EncodeParams};
use posat_core::pipeline::{
    drive_with, Answer, Backend, KSchedule, MuPlan, MuResolution, SearchPlan, Verdict,
};
use posat_core::pomdp::{parse_pomdp, Pomdp};
use posat_core::solver::{solve, ExternalSolver, SatOutcome, SolverConfig};
use posat_core::strategy::{parse_strategy, verify_almost_sure, write_strategy, VerifyOutcome};

const EXIT_WINNING: i32 = 0;
const EXIT_NO_STRATEGY: i32 = 1;
const EXIT_UNKNOWN: i32 = 2;
const EXIT_ERROR: i32 = 10;
/// Status when the consumer closes stdout mid-write, matching what a
/// default SIGPIPE disposition would surface in the shell.
const EXIT_PIPE_CLOSED: i32 = 141;

#[derive(Debug, Parser)]
#[command(name = "posat", version, about = "Small-memory almost-sure reachability planning via SAT")]
enum Cli {
    /// Search for a winning strategy over memory sizes and path bounds
    Solve(SolveArgs),
    /// Write one round's CNF encoding as DIMACS
    Encode(EncodeArgs),
    /// Check a strategy file against a model
    Verify(VerifyArgs),
    /// Generate a benchmark model
    Gen(gen::GenArgs),
    /// Decide winnability by the explicit belief-support construction
    Baseline(BaselineArgs),
    /// Run the embedded solver on a DIMACS file
    SolveDimacs(SolveDimacsArgs),
}

#[derive(Debug, clap::Args)]
struct SolveArgs {
    /// Model file
    #[arg(long)]
    pomdp: PathBuf,
    /// Try exactly this memory size (default 1)
    #[arg(long, conflicts_with = "mu_max")]
    mu: Option<usize>,
    /// Search memory sizes 1 through this, ascending
    #[arg(long)]
    mu_max: Option<usize>,
    /// Try exactly this path bound
    #[arg(long, conflicts_with = "k_schedule")]
    k: Option<usize>,
    /// Comma-separated path bounds, tried in order, e.g. 2,4,8
    #[arg(long, value_delimiter = ',')]
    k_schedule: Option<Vec<usize>>,
    /// Restrict the search to deterministic strategies
    #[arg(long)]
    deterministic: bool,
    /// `embedded`, or `external:<command with {dimacs}>`
    #[arg(long, default_value = "embedded")]
    backend: String,
    /// Recorded in solver stats (embedded backend)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give up with UNKNOWN after this many conflicts (embedded backend)
    #[arg(long)]
    conflict_budget: Option<u64>,
    /// Write the winning strategy here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the deciding round's formula here as DIMACS
    #[arg(long)]
    dimacs_out: Option<PathBuf>,
    /// Write a JSON report here; `-` for stdout
    #[arg(long)]
    json_report: Option<String>,
}

#[derive(Debug, clap::Args)]
struct EncodeArgs {
    /// Model file
    #[arg(long)]
    pomdp: PathBuf,
    /// Path bound, at least 1
    #[arg(long)]
    k: usize,
    /// Memory size; 1 selects the observation-stationary encoding
    #[arg(long, default_value_t = 1)]
    mu: usize,
    /// Add determinism constraints
    #[arg(long)]
    deterministic: bool,
    /// Output path; `-` for stdout
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Model file
    #[arg(long)]
    pomdp: PathBuf,
    /// Strategy file
    #[arg(long)]
    strategy: PathBuf,
}

#[derive(Debug, clap::Args)]
struct BaselineArgs {
    /// Model file
    #[arg(long)]
    pomdp: PathBuf,
    /// Abort if the construction exceeds this many belief supports
    #[arg(long)]
    node_cap: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct SolveDimacsArgs {
    /// DIMACS CNF file
    file: PathBuf,
    /// Recorded in solver stats
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give up with UNKNOWN after this many conflicts
    #[arg(long)]
    conflict_budget: Option<u64>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_ERROR,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            EXIT_ERROR
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli {
        Cli::Solve(args) => cmd_solve(args),
        Cli::Encode(args) => cmd_encode(args),
        Cli::Verify(args) => cmd_verify(args),
        Cli::Gen(args) => gen::run(&args),
        Cli::Baseline(args) => cmd_baseline(args),
        Cli::SolveDimacs(args) => cmd_solve_dimacs(args),
    }
}

fn load_model(path: &PathBuf) -> Result<Pomdp> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading model {}", path.display()))?;
    parse_pomdp(&text).with_context(|| format!("parsing model {}", path.display()))
}

/// Writes to stdout, flushing so lines land as they are produced.  A
/// consumer that closed the pipe ends the process quietly; `println!`
/// would unwind with a write panic instead.
fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let res = out.write_all(text.as_bytes()).and_then(|()| out.flush());
    if let Err(e) = res {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(EXIT_PIPE_CLOSED);
        }
        eprintln!("error: writing stdout: {e}");
        std::process::exit(EXIT_ERROR);
    }
}

fn print_line(line: &str) {
    print_stdout(&format!("{line}\n"));
}

/// Writes `text` to `path`, with `-` meaning stdout.
fn write_text(path: &str, text: &str) -> Result<()> {
    if path == "-" {
        print_stdout(text);
    } else {
        fs::write(path, text).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

fn parse_backend(arg: &str, seed: u64, conflict_budget: Option<u64>) -> Result<Backend> {
    if arg == "embedded" {
        return Ok(Backend::Embedded(SolverConfig {
            conflict_budget,
            seed,
        }));
    }
    if let Some(template) = arg.strip_prefix("external:") {
        let ext = ExternalSolver::from_template(template)
            .context("external backend template must contain {dimacs}")?;
        return Ok(Backend::External(ext));
    }
    bail!("backend must be `embedded` or `external:<command>`, got `{arg}`");
}

fn cmd_solve(args: SolveArgs) -> Result<i32> {
    let start = Instant::now();
    let p = load_model(&args.pomdp)?;
    let mu = match (args.mu, args.mu_max) {
        (Some(mu), None) => MuPlan::Fixed(mu),
        (None, Some(max)) => MuPlan::Search { max },
        (None, None) => MuPlan::Fixed(1),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let schedule = match (args.k, &args.k_schedule) {
        (Some(k), None) => KSchedule::Explicit(vec![k]),
        (None, Some(ks)) => KSchedule::Explicit(ks.clone()),
        (None, None) => KSchedule::default(),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    let backend = parse_backend(&args.backend, args.seed, args.conflict_budget)?;
    let plan = SearchPlan {
        mu,
        schedule,
        deterministic: args.deterministic,
    };
    let outcome = drive_with(&p, &plan, &backend, |mu, resolution| match resolution {
        MuResolution::Winning { k } => print_line(&format!("WINNING({mu},{k})")),
        MuResolution::NoStrategy => print_line(&format!("NO-STRATEGY({mu})")),
        MuResolution::Inconclusive => print_line(&format!("UNKNOWN({mu})")),
    })?;
    let total_ms = start.elapsed().as_millis() as u64;

    for a in &outcome.attempts {
        let answer = match a.answer {
            Answer::Sat => "SAT",
            Answer::Unsat => "UNSAT",
            Answer::Unknown => "UNKNOWN",
        };
        eprintln!(
            "mu={} k={} {answer} vars={} clauses={} conflicts={} \
             encode={}ms solve={}ms extract={}ms verify={}ms",
            a.mu,
            a.k,
            a.vars,
            a.clauses,
            a.stats.conflicts,
            a.encode_ms,
            a.solve_ms,
            a.extract_ms,
            a.verify_ms
        );
    }

    if let Some(path) = &args.out {
        if let Some(strategy) = &outcome.strategy {
            let text = write_strategy(strategy, &p)?;
            fs::write(path, text)
                .with_context(|| format!("writing strategy {}", path.display()))?;
        } else {
            eprintln!("no winning strategy, {} not written", path.display());
        }
    }
    if let Some(path) = &args.dimacs_out {
        if let Some(a) = outcome.attempts.last() {
            let enc = encode(
                &p,
                EncodeParams {
                    k: a.k,
                    mu: a.mu,
                    deterministic: args.deterministic,
                },
            );
            let mut file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            write_dimacs(&enc.formula, Some(&enc.map), &mut file)?;
        }
    }
    if let Some(path) = &args.json_report {
        report::write(&report::build(&outcome, total_ms), path)?;
    }
    Ok(match outcome.verdict {
        Verdict::Winning { .. } => EXIT_WINNING,
        Verdict::NoStrategy { .. } => EXIT_NO_STRATEGY,
        Verdict::Unknown => EXIT_UNKNOWN,
    })
}

fn cmd_encode(args: EncodeArgs) -> Result<i32> {
    if args.k == 0 {
        bail!("--k must be at least 1");
    }
    if args.mu == 0 {
        bail!("--mu must be at least 1");
    }
    let p = load_model(&args.pomdp)?;
    let enc = encode(
        &p,
        EncodeParams {
            k: args.k,
            mu: args.mu,
            deterministic: args.deterministic,
        },
    );
    let mut buf = Vec::new();
    write_dimacs(&enc.formula, Some(&enc.map), &mut buf)?;
    write_text(&args.out, std::str::from_utf8(&buf).expect("dimacs is ascii"))?;
    eprintln!(
        "vars={} clauses={} named={} aux={}",
        enc.formula.num_vars(),
        enc.formula.num_clauses(),
        enc.named_vars(),
        enc.aux_vars()
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let p = load_model(&args.pomdp)?;
    let text = fs::read_to_string(&args.strategy)
        .with_context(|| format!("reading strategy {}", args.strategy.display()))?;
    let strategy = parse_strategy(&text, &p)
        .with_context(|| format!("parsing strategy {}", args.strategy.display()))?;
    match verify_almost_sure(&p, &strategy)? {
        VerifyOutcome::AlmostSure => {
            print_line("WINNING");
            Ok(0)
        }
        VerifyOutcome::Counterexample { state, mem } => {
            print_line(&format!("NOT-WINNING({},m{})", p.state_name(state), mem));
            Ok(1)
        }
    }
}

fn cmd_baseline(args: BaselineArgs) -> Result<i32> {
    let p = load_model(&args.pomdp)?;
    let cap = args.node_cap.unwrap_or(DEFAULT_NODE_CAP);
    if baseline_winning(&p, cap)? {
        print_line("WINNING");
        Ok(0)
    } else {
        print_line("NO-STRATEGY");
        Ok(1)
    }
}

fn cmd_solve_dimacs(args: SolveDimacsArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))?;
    let f = parse_dimacs(&mut text.as_bytes())
        .with_context(|| format!("parsing {}", args.file.display()))?;
    let config = SolverConfig {
        conflict_budget: args.conflict_budget,
        seed: args.seed,
    };
    let result = solve(&f, &config);
    match result.outcome {
        SatOutcome::Sat { model } => {
            print_line("s SATISFIABLE");
            let mut line = String::from("v");
            for v in 1..model.len() {
                let lit = if model[v] { v as i64 } else { -(v as i64) };
                if line.len() > 72 {
                    print_line(&line);
                    line = String::from("v");
                }
                line.push(' ');
                line.push_str(&lit.to_string());
            }
            line.push_str(" 0");
            print_line(&line);
        }
        SatOutcome::Unsat => print_line("s UNSATISFIABLE"),
        SatOutcome::Unknown => print_line("s UNKNOWN"),
    }
    eprintln!(
        "conflicts={} decisions={} propagations={} restarts={} {}ms",
        result.stats.conflicts,
        result.stats.decisions,
        result.stats.propagations,
        result.stats.restarts,
        result.stats.time_ms
    );
    Ok(0)
}
