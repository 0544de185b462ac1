//! End-to-end tests of the `posat` binary: verdict lines, exit codes,
//! artifact files, and backend selection.

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_posat"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// Writes an executable shell script and returns its path.
fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    let mut perm = fs::metadata(&path).unwrap().permissions();
    perm.set_mode(0o755);
    fs::set_permissions(&path, perm).unwrap();
    path
}

#[test]
fn winning_verdict_and_exit_code() {
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "WINNING(1,1)\n");
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn conclusive_no_strategy_walks_memory_sizes() {
    let out = bin()
        .args(["solve", "--mu-max", "2", "--pomdp"])
        .arg(fixture("m2.pomdp"))
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "NO-STRATEGY(1)\nNO-STRATEGY(2)\n");
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn short_schedule_is_inconclusive() {
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1", "--pomdp"])
        .arg(fixture("m2.pomdp"))
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "UNKNOWN(1)\n");
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn verify_accepts_and_rejects() {
    let good = bin()
        .arg("verify")
        .arg("--pomdp")
        .arg(fixture("m3.pomdp"))
        .arg("--strategy")
        .arg(fixture("m3_always_a.strategy"))
        .output()
        .unwrap();
    assert_eq!(stdout(&good), "WINNING\n");
    assert_eq!(exit_code(&good), 0);

    let bad = bin()
        .arg("verify")
        .arg("--pomdp")
        .arg(fixture("m3.pomdp"))
        .arg("--strategy")
        .arg(fixture("m3_always_b.strategy"))
        .output()
        .unwrap();
    assert_eq!(stdout(&bad), "NOT-WINNING(U,m0)\n");
    assert_eq!(exit_code(&bad), 1);
}

#[test]
fn verify_rejects_a_mismatched_strategy() {
    let out = bin()
        .arg("verify")
        .arg("--pomdp")
        .arg(fixture("m1.pomdp"))
        .arg("--strategy")
        .arg(fixture("m3_always_a.strategy"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
    assert!(stderr(&out).contains("error"));
}

#[test]
fn encode_is_byte_identical_and_the_header_matches_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.cnf");
    let b = dir.path().join("b.cnf");
    let mut first = None;
    for path in [&a, &b] {
        let out = bin()
            .args(["encode", "--k", "4", "--mu", "2", "--pomdp"])
            .arg(fixture("hallway_split.pomdp"))
            .arg("--out")
            .arg(path)
            .output()
            .unwrap();
        assert_eq!(exit_code(&out), 0);
        first.get_or_insert(stderr(&out));
    }
    let bytes_a = fs::read(&a).unwrap();
    assert_eq!(bytes_a, fs::read(&b).unwrap());

    let text = String::from_utf8(bytes_a).unwrap();
    let header = text
        .lines()
        .find(|l| l.starts_with("p cnf "))
        .expect("a DIMACS header");
    let mut fields = header.split_whitespace().skip(2);
    let vars: usize = fields.next().unwrap().parse().unwrap();
    let clauses: usize = fields.next().unwrap().parse().unwrap();
    let report = first.unwrap();
    assert!(report.contains(&format!("vars={vars} ")));
    assert!(report.contains(&format!("clauses={clauses} ")));
}

#[test]
fn encode_rejects_a_zero_bound() {
    let out = bin()
        .args(["encode", "--k", "0", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
}

#[test]
fn solve_writes_a_strategy_the_verifier_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = dir.path().join("found.strategy");
    let out = bin()
        .args(["solve", "--mu", "2", "--k-schedule", "2,4,8", "--pomdp"])
        .arg(fixture("rocksample2.pomdp"))
        .arg("--out")
        .arg(&strategy)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).starts_with("WINNING(2,"));

    let check = bin()
        .arg("verify")
        .arg("--pomdp")
        .arg(fixture("rocksample2.pomdp"))
        .arg("--strategy")
        .arg(&strategy)
        .output()
        .unwrap();
    assert_eq!(stdout(&check), "WINNING\n");
    assert_eq!(exit_code(&check), 0);
}

#[test]
fn json_report_carries_the_agreed_fields() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .arg("--json-report")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(value["verdict"], "WINNING");
    assert_eq!(value["mu"], 1);
    assert_eq!(value["k"], 1);
    for field in ["vars", "clauses", "time_ms"] {
        assert!(value[field].is_number(), "missing {field}");
    }
    for field in ["conflicts", "decisions", "propagations", "restarts"] {
        assert!(value["solver_stats"][field].is_number(), "missing {field}");
    }
    assert!(value["phases"]["solve_ms"].is_number());
}

#[test]
fn solve_emits_the_deciding_formula_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let from_solve = dir.path().join("solve.cnf");
    let from_encode = dir.path().join("encode.cnf");
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .arg("--dimacs-out")
        .arg(&from_solve)
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let enc = bin()
        .args(["encode", "--k", "1", "--mu", "1", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .arg("--out")
        .arg(&from_encode)
        .output()
        .unwrap();
    assert_eq!(exit_code(&enc), 0);
    assert_eq!(fs::read(&from_solve).unwrap(), fs::read(&from_encode).unwrap());
}

#[test]
fn external_backend_through_the_embedded_solver_agrees() {
    let self_solver = format!(
        "external:{} solve-dimacs {{dimacs}}",
        env!("CARGO_BIN_EXE_posat")
    );
    let sat = bin()
        .args(["solve", "--mu", "1", "--k", "1", "--backend", &self_solver, "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .output()
        .unwrap();
    assert_eq!(stdout(&sat), "WINNING(1,1)\n");
    assert_eq!(exit_code(&sat), 0);

    let unsat = bin()
        .args(["solve", "--mu-max", "2", "--backend", &self_solver, "--pomdp"])
        .arg(fixture("m2.pomdp"))
        .output()
        .unwrap();
    assert_eq!(stdout(&unsat), "NO-STRATEGY(1)\nNO-STRATEGY(2)\n");
    assert_eq!(exit_code(&unsat), 1);
}

#[test]
fn lying_external_solver_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let liar = script(
        dir.path(),
        "liar.sh",
        "echo 's SATISFIABLE'\necho 'v 1 0'",
    );
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "2"])
        .arg("--backend")
        .arg(format!("external:{} {{dimacs}}", liar.display()))
        .arg("--pomdp")
        .arg(fixture("m2.pomdp"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
    assert!(stderr(&out).contains("error"));
}

#[test]
fn garbage_external_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let noise = script(dir.path(), "noise.sh", "echo 'no status here'");
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1"])
        .arg("--backend")
        .arg(format!("external:{} {{dimacs}}", noise.display()))
        .arg("--pomdp")
        .arg(fixture("m1.pomdp"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
}

#[test]
fn missing_external_solver_is_an_error() {
    let out = bin()
        .args(["solve", "--mu", "1", "--k", "1"])
        .arg("--backend")
        .arg("external:/nonexistent/solver {dimacs}")
        .arg("--pomdp")
        .arg(fixture("m1.pomdp"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
}

#[test]
fn gen_preset_equals_the_spelled_out_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("preset.pomdp");
    let b = dir.path().join("flags.pomdp");
    let preset = bin()
        .args(["gen", "hallway", "--preset", "split", "--out"])
        .arg(&a)
        .output()
        .unwrap();
    assert_eq!(exit_code(&preset), 0);
    let flags = bin()
        .args([
            "gen", "hallway", "--width", "3", "--height", "3", "--barrier", "1,2", "--trap",
            "1,0", "--goal", "2,2", "--start", "0,0", "--start", "0,2", "--fail-prob", "0.2",
            "--out",
        ])
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(exit_code(&flags), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gen_preset_conflicts_with_explicit_flags() {
    let out = bin()
        .args(["gen", "escape", "--preset", "three", "--n", "4"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
}

#[test]
fn gen_rejects_a_bad_rock_kind() {
    let out = bin()
        .args(["gen", "rocksample", "--rover", "0,0", "--rock", "1,1,shiny"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 10);
}

#[test]
fn generated_random_models_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("random.pomdp");
    let gen = bin()
        .args(["gen", "random", "--seed", "3", "--out"])
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(exit_code(&gen), 0);
    let out = bin()
        .args(["solve", "--mu-max", "2", "--pomdp"])
        .arg(&model)
        .output()
        .unwrap();
    let code = exit_code(&out);
    assert!(code == 0 || code == 1, "expected a settled verdict, exit {code}");
    assert!(!stdout(&out).is_empty());
}

#[test]
fn solve_dimacs_speaks_the_competition_format() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("m1.cnf");
    let enc = bin()
        .args(["encode", "--k", "1", "--mu", "1", "--pomdp"])
        .arg(fixture("m1.pomdp"))
        .arg("--out")
        .arg(&cnf)
        .output()
        .unwrap();
    assert_eq!(exit_code(&enc), 0);
    let sat = bin().arg("solve-dimacs").arg(&cnf).output().unwrap();
    assert_eq!(exit_code(&sat), 0);
    let text = stdout(&sat);
    assert!(text.contains("s SATISFIABLE"));
    assert!(text.lines().any(|l| l.starts_with("v ")));
    assert!(text.trim_end().ends_with(" 0"));

    let unsat_path = dir.path().join("unsat.cnf");
    fs::write(&unsat_path, "p cnf 1 2\n1 0\n-1 0\n").unwrap();
    let unsat = bin().arg("solve-dimacs").arg(&unsat_path).output().unwrap();
    assert_eq!(exit_code(&unsat), 0);
    assert!(stdout(&unsat).contains("s UNSATISFIABLE"));
}

#[test]
fn help_exits_cleanly() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("solve"));
}
