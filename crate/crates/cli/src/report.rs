//! JSON run reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use posat_core::pipeline::{Attempt, DriveOutcome, Verdict};

#[derive(Debug, Serialize)]
pub struct SolverStatsReport {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learnt_clauses: u64,
    pub time_ms: u64,
    pub seed: u64,
}

/// Wall time of each phase of the deciding round.
#[derive(Debug, Serialize)]
pub struct PhaseReport {
    pub encode_ms: u64,
    pub solve_ms: u64,
    pub extract_ms: u64,
    pub verify_ms: u64,
}

/// One solve run.  `mu`, `k`, sizes and stats describe the round that
/// settled the verdict (the last round tried); `time_ms` is the whole
/// run including all earlier rounds.
#[derive(Debug, Serialize)]
pub struct Report {
    pub verdict: String,
    pub mu: usize,
    pub k: usize,
    pub vars: i32,
    pub clauses: usize,
    pub solver_stats: SolverStatsReport,
    pub time_ms: u64,
    pub phases: PhaseReport,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Winning { .. } => "WINNING",
        Verdict::NoStrategy { .. } => "NO-STRATEGY",
        Verdict::Unknown => "UNKNOWN",
    }
}

pub fn build(outcome: &DriveOutcome, total_ms: u64) -> Report {
    let last = outcome.attempts.last();
    let (mu, k) = match (outcome.verdict, last) {
        (Verdict::Winning { mu, k }, _) => (mu, k),
        (_, Some(a)) => (a.mu, a.k),
        (_, None) => (0, 0),
    };
    let empty = Attempt {
        mu: 0,
        k: 0,
        vars: 0,
        named_vars: 0,
        aux_vars: 0,
        clauses: 0,
        answer: posat_core::pipeline::Answer::Unknown,
        stats: Default::default(),
        encode_ms: 0,
        solve_ms: 0,
        extract_ms: 0,
        verify_ms: 0,
    };
    let a = last.unwrap_or(&empty);
    Report {
        verdict: verdict_name(outcome.verdict).to_owned(),
        mu,
        k,
        vars: a.vars,
        clauses: a.clauses,
        solver_stats: SolverStatsReport {
            conflicts: a.stats.conflicts,
            decisions: a.stats.decisions,
            propagations: a.stats.propagations,
            restarts: a.stats.restarts,
            learnt_clauses: a.stats.learnt_clauses,
            time_ms: a.stats.time_ms,
            seed: a.stats.seed,
        },
        time_ms: total_ms,
        phases: PhaseReport {
            encode_ms: a.encode_ms,
            solve_ms: a.solve_ms,
            extract_ms: a.extract_ms,
            verify_ms: a.verify_ms,
        },
    }
}

/// Writes the report as pretty JSON; `-` means stdout.
pub fn write(report: &Report, path: &str) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    if path == "-" {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{json}")?;
    } else {
        fs::write(Path::new(path), json + "\n")
            .with_context(|| format!("writing report to {path}"))?;
    }
    Ok(())
}
