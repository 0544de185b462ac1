//! SAT solving: an embedded CDCL solver and an adapter for external
//! DIMACS solvers.
//!
//! The embedded solver is a conflict-driven clause learner with
//! two-literal watching (with blocking literals), VSIDS-style activity
//! ordering, phase saving, Luby restarts, first-UIP learning with local
//! clause minimization, and activity-based reduction of the learnt
//! database.  It is fully deterministic: the same formula and
//! configuration produce the same search, decision for decision.  The
//! `seed` in [`SolverConfig`] does not perturb the search; it is carried
//! into [`SolverStats`] so experiment logs record the whole
//! configuration.
//!
//! Every satisfying assignment, embedded or external, is checked against
//! the formula before being returned.

use std::io::Write as _;
use std::process::Command;
use std::time::Instant;

use thiserror::Error;

use crate::cnf::{write_dimacs, CnfFormula};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to run `{cmd}`: {source}")]
    Spawn {
        cmd: String,
        source: std::io::Error,
    },
    #[error("solver command template must contain {{dimacs}}")]
    BadTemplate,
    #[error("unusable solver output: {0}")]
    Output(String),
    #[error("solver model leaves variable {0} unassigned")]
    IncompleteModel(i32),
    #[error("claimed model violates clause {0}")]
    InvalidModel(usize),
    #[error("model assigns {got} variables but the formula has {want}")]
    ModelLength { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatOutcome {
    /// `model[v]` is the value of variable `v`; index 0 is unused.
    Sat { model: Vec<bool> },
    Unsat,
    /// Budget exhausted before an answer.
    Unknown,
}

impl SatOutcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatOutcome::Sat { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learnt_clauses: u64,
    pub time_ms: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SatResult {
    pub outcome: SatOutcome,
    pub stats: SolverStats,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Give up with [`SatOutcome::Unknown`] after this many conflicts.
    pub conflict_budget: Option<u64>,
    /// Recorded in stats; the search itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            conflict_budget: None,
            seed: 0,
        }
    }
}

/// Checks a model against every clause; `model` is indexed by variable
/// with index 0 unused.
pub fn validate_model(f: &CnfFormula, model: &[bool]) -> Result<(), SolverError> {
    let want = f.num_vars() as usize + 1;
    if model.len() < want {
        return Err(SolverError::ModelLength {
            got: model.len().saturating_sub(1),
            want: want - 1,
        });
    }
    for (i, clause) in f.iter().enumerate() {
        let sat = clause.iter().any(|&l| {
            let v = model[l.unsigned_abs() as usize];
            if l > 0 {
                v
            } else {
                !v
            }
        });
        if !sat {
            return Err(SolverError::InvalidModel(i));
        }
    }
    Ok(())
}

/// Decides satisfiability with the embedded CDCL solver.
pub fn solve(f: &CnfFormula, config: &SolverConfig) -> SatResult {
    let start = Instant::now();
    let mut solver = Solver::new(f, config);
    let outcome = solver.run();
    let mut stats = solver.stats;
    stats.time_ms = start.elapsed().as_millis() as u64;
    stats.seed = config.seed;
    if let SatOutcome::Sat { model } = &outcome {
        if let Err(e) = validate_model(f, model) {
            panic!("embedded solver produced a bad model: {e}");
        }
    }
    SatResult { outcome, stats }
}

// Internal literal encoding: variable v (0-based) gives literals 2v
// (positive) and 2v+1 (negative).
type Lit = u32;
type Var = u32;

const NO_REASON: u32 = u32::MAX;

fn var(l: Lit) -> Var {
    l >> 1
}

fn from_dimacs(l: i32) -> Lit {
    let v = (l.unsigned_abs() - 1) << 1;
    if l < 0 {
        v | 1
    } else {
        v
    }
}

const VAL_TRUE: u8 = 0;
const VAL_FALSE: u8 = 1;
const VAL_UNDEF: u8 = 2;

#[derive(Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: Lit,
}

struct Clause {
    lits: Vec<Lit>,
    activity: f32,
    learnt: bool,
    deleted: bool,
}

/// Max-heap over variable activity with a position index, so bumps can
/// sift in place.  Ties break toward the smaller variable to keep every
/// run reproducible.
#[derive(Default)]
struct VarOrder {
    heap: Vec<Var>,
    pos: Vec<i32>,
}

impl VarOrder {
    fn better(a: Var, b: Var, act: &[f64]) -> bool {
        act[a as usize] > act[b as usize] || (act[a as usize] == act[b as usize] && a < b)
    }

    fn in_heap(&self, v: Var) -> bool {
        self.pos[v as usize] >= 0
    }

    fn insert(&mut self, v: Var, act: &[f64]) {
        if self.in_heap(v) {
            return;
        }
        self.pos[v as usize] = self.heap.len() as i32;
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn bump(&mut self, v: Var, act: &[f64]) {
        if self.in_heap(v) {
            self.sift_up(self.pos[v as usize] as usize, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<Var> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = -1;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = 0;
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if Self::better(self.heap[i], self.heap[parent], act) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        loop {
            let l = 2 * i + 1;
            let r = 2 * i + 2;
            let mut best = i;
            if l < self.heap.len() && Self::better(self.heap[l], self.heap[best], act) {
                best = l;
            }
            if r < self.heap.len() && Self::better(self.heap[r], self.heap[best], act) {
                best = r;
            }
            if best == i {
                return;
            }
            self.swap(i, best);
            i = best;
        }
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i] as usize] = i as i32;
        self.pos[self.heap[j] as usize] = j as i32;
    }
}

struct Solver {
    nvars: usize,
    clauses: Vec<Clause>,
    learnts: Vec<u32>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<u8>,
    polarity: Vec<bool>,
    reason: Vec<u32>,
    level: Vec<u32>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f32,
    order: VarOrder,
    seen: Vec<bool>,
    ok: bool,
    conflict_budget: Option<u64>,
    max_learnts: usize,
    stats: SolverStats,
}

impl Solver {
    fn new(f: &CnfFormula, config: &SolverConfig) -> Self {
        let nvars = f.num_vars() as usize;
        let mut s = Solver {
            nvars,
            clauses: Vec::with_capacity(f.num_clauses()),
            learnts: Vec::new(),
            watches: vec![Vec::new(); 2 * nvars],
            assigns: vec![VAL_UNDEF; nvars],
            polarity: vec![true; nvars],
            reason: vec![NO_REASON; nvars],
            level: vec![0; nvars],
            trail: Vec::with_capacity(nvars),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; nvars],
            var_inc: 1.0,
            cla_inc: 1.0,
            order: VarOrder {
                heap: Vec::with_capacity(nvars),
                pos: vec![-1; nvars],
            },
            seen: vec![false; nvars],
            ok: true,
            conflict_budget: config.conflict_budget,
            max_learnts: (f.num_clauses() / 3).max(2000),
            stats: SolverStats::default(),
        };
        for v in 0..nvars as Var {
            s.order.insert(v, &s.activity);
        }
        for clause in f.iter() {
            let lits: Vec<Lit> = clause.iter().map(|&l| from_dimacs(l)).collect();
            if !s.add_input_clause(lits) {
                break;
            }
        }
        s
    }

    fn value_lit(&self, l: Lit) -> u8 {
        let a = self.assigns[var(l) as usize];
        if a == VAL_UNDEF {
            VAL_UNDEF
        } else {
            a ^ (l & 1) as u8
        }
    }

    fn add_input_clause(&mut self, lits: Vec<Lit>) -> bool {
        match lits.len() {
            0 => unreachable!("formula invariant"),
            1 => match self.value_lit(lits[0]) {
                VAL_TRUE => true,
                VAL_FALSE => {
                    self.ok = false;
                    false
                }
                _ => {
                    self.enqueue(lits[0], NO_REASON);
                    true
                }
            },
            _ => {
                let cref = self.clauses.len() as u32;
                self.watches[lits[0] as usize].push(Watcher {
                    cref,
                    blocker: lits[1],
                });
                self.watches[lits[1] as usize].push(Watcher {
                    cref,
                    blocker: lits[0],
                });
                self.clauses.push(Clause {
                    lits,
                    activity: 0.0,
                    learnt: false,
                    deleted: false,
                });
                true
            }
        }
    }

    fn enqueue(&mut self, l: Lit, reason: u32) {
        let v = var(l) as usize;
        debug_assert_eq!(self.assigns[v], VAL_UNDEF);
        self.assigns[v] = (l & 1) as u8;
        self.reason[v] = reason;
        self.level[v] = self.trail_lim.len() as u32;
        self.trail.push(l);
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    /// Unit propagation; returns the conflicting clause if any.
    fn propagate(&mut self) -> Option<u32> {
        let mut confl = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = p ^ 1;
            let mut ws = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut i = 0;
            let mut j = 0;
            'watchers: while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value_lit(w.blocker) == VAL_TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                if self.clauses[cref].deleted {
                    continue; // drop the stale watcher
                }
                if self.clauses[cref].lits[0] == false_lit {
                    self.clauses[cref].lits.swap(0, 1);
                }
                let first = self.clauses[cref].lits[0];
                let w2 = Watcher {
                    cref: w.cref,
                    blocker: first,
                };
                if first != w.blocker && self.value_lit(first) == VAL_TRUE {
                    ws[j] = w2;
                    j += 1;
                    continue;
                }
                for k in 2..self.clauses[cref].lits.len() {
                    let cand = self.clauses[cref].lits[k];
                    if self.value_lit(cand) != VAL_FALSE {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[cand as usize].push(w2);
                        continue 'watchers;
                    }
                }
                // Unit or conflict.
                ws[j] = w2;
                j += 1;
                if self.value_lit(first) == VAL_FALSE {
                    confl = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[false_lit as usize] = ws;
            if confl.is_some() {
                break;
            }
        }
        confl
    }

    fn bump_var(&mut self, v: Var) {
        self.activity[v as usize] += self.var_inc;
        if self.activity[v as usize] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.bump(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for &l in &self.learnts {
                self.clauses[l as usize].activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    /// First-UIP learning.  Returns the learnt clause (asserting literal
    /// first) and the level to jump back to.
    fn analyze(&mut self, mut confl: u32) -> (Vec<Lit>, u32) {
        let mut learnt: Vec<Lit> = vec![0];
        let mut counter = 0usize;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        let mut to_clear: Vec<Var> = Vec::new();
        loop {
            if self.clauses[confl as usize].learnt {
                self.bump_clause(confl);
            }
            let skip = usize::from(p.is_some());
            for idx in skip..self.clauses[confl as usize].lits.len() {
                let q = self.clauses[confl as usize].lits[idx];
                let v = var(q);
                if !self.seen[v as usize] && self.level[v as usize] > 0 {
                    self.seen[v as usize] = true;
                    to_clear.push(v);
                    self.bump_var(v);
                    if self.level[v as usize] >= self.decision_level() {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[var(self.trail[index]) as usize] {
                    break;
                }
            }
            let pl = self.trail[index];
            counter -= 1;
            if counter == 0 {
                learnt[0] = pl ^ 1;
                break;
            }
            self.seen[var(pl) as usize] = false;
            p = Some(pl);
            confl = self.reason[var(pl) as usize];
            debug_assert_ne!(confl, NO_REASON);
        }

        // Local minimization: a literal is redundant when its reason is
        // subsumed by the rest of the clause.
        let mut kept = Vec::with_capacity(learnt.len());
        kept.push(learnt[0]);
        for &q in &learnt[1..] {
            if !self.redundant(q) {
                kept.push(q);
            }
        }
        let mut learnt = kept;

        let backtrack = if learnt.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[var(learnt[i]) as usize] > self.level[var(learnt[max_i]) as usize] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            self.level[var(learnt[1]) as usize]
        };
        for v in to_clear {
            self.seen[v as usize] = false;
        }
        (learnt, backtrack)
    }

    fn redundant(&self, q: Lit) -> bool {
        let r = self.reason[var(q) as usize];
        if r == NO_REASON {
            return false;
        }
        self.clauses[r as usize].lits.iter().all(|&x| {
            x == (q ^ 1)
                || self.seen[var(x) as usize]
                || self.level[var(x) as usize] == 0
        })
    }

    fn cancel_until(&mut self, target: u32) {
        if self.decision_level() <= target {
            return;
        }
        let keep = self.trail_lim[target as usize];
        for i in (keep..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = var(l) as usize;
            self.assigns[v] = VAL_UNDEF;
            self.polarity[v] = l & 1 == 1;
            self.reason[v] = NO_REASON;
            self.order.insert(v as Var, &self.activity);
        }
        self.trail.truncate(keep);
        self.trail_lim.truncate(target as usize);
        self.qhead = keep;
    }

    fn learn(&mut self, learnt: Vec<Lit>) {
        self.stats.learnt_clauses += 1;
        if learnt.len() == 1 {
            self.enqueue(learnt[0], NO_REASON);
            return;
        }
        let cref = self.clauses.len() as u32;
        self.watches[learnt[0] as usize].push(Watcher {
            cref,
            blocker: learnt[1],
        });
        self.watches[learnt[1] as usize].push(Watcher {
            cref,
            blocker: learnt[0],
        });
        let first = learnt[0];
        self.clauses.push(Clause {
            lits: learnt,
            activity: 0.0,
            learnt: true,
            deleted: false,
        });
        self.learnts.push(cref);
        self.bump_clause(cref);
        self.enqueue(first, cref);
    }

    fn locked(&self, cref: u32) -> bool {
        let first = self.clauses[cref as usize].lits[0];
        self.value_lit(first) == VAL_TRUE && self.reason[var(first) as usize] == cref
    }

    /// Drops the less active half of the learnt clauses.
    fn reduce_db(&mut self) {
        let mut ranked = self.learnts.clone();
        ranked.sort_by(|&a, &b| {
            let (ca, cb) = (&self.clauses[a as usize], &self.clauses[b as usize]);
            ca.activity
                .partial_cmp(&cb.activity)
                .unwrap()
                .then(a.cmp(&b))
        });
        let target = ranked.len() / 2;
        let mut removed = 0;
        for &cref in &ranked {
            if removed >= target {
                break;
            }
            if self.clauses[cref as usize].lits.len() > 2 && !self.locked(cref) {
                let c = &mut self.clauses[cref as usize];
                c.deleted = true;
                c.lits = Vec::new();
                removed += 1;
            }
        }
        self.learnts
            .retain(|&cref| !self.clauses[cref as usize].deleted);
        self.max_learnts += self.max_learnts / 10;
    }

    fn decide(&mut self) -> bool {
        loop {
            match self.order.pop(&self.activity) {
                None => return false,
                Some(v) => {
                    if self.assigns[v as usize] == VAL_UNDEF {
                        self.stats.decisions += 1;
                        self.trail_lim.push(self.trail.len());
                        let l = (v << 1) | u32::from(self.polarity[v as usize]);
                        self.enqueue(l, NO_REASON);
                        return true;
                    }
                }
            }
        }
    }

    fn run(&mut self) -> SatOutcome {
        if !self.ok {
            return SatOutcome::Unsat;
        }
        let mut restarts = 0u64;
        let mut conflicts_here = 0u64;
        let mut restart_limit = 100 * luby(restarts);
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                conflicts_here += 1;
                if self.decision_level() == 0 {
                    return SatOutcome::Unsat;
                }
                let (learnt, backtrack) = self.analyze(confl);
                self.cancel_until(backtrack);
                self.learn(learnt);
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
                if let Some(budget) = self.conflict_budget {
                    if self.stats.conflicts >= budget {
                        return SatOutcome::Unknown;
                    }
                }
            } else {
                if conflicts_here >= restart_limit {
                    restarts += 1;
                    self.stats.restarts += 1;
                    conflicts_here = 0;
                    restart_limit = 100 * luby(restarts);
                    self.cancel_until(0);
                    continue;
                }
                if self.learnts.len() >= self.max_learnts {
                    self.reduce_db();
                }
                if !self.decide() {
                    let mut model = vec![false; self.nvars + 1];
                    for v in 0..self.nvars {
                        model[v + 1] = self.assigns[v] == VAL_TRUE;
                    }
                    return SatOutcome::Sat { model };
                }
            }
        }
    }
}

/// The Luby restart sequence 1 1 2 1 1 2 4 ... as powers of two.
fn luby(i: u64) -> u64 {
    let mut x = i;
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) / 2;
        seq -= 1;
        x %= size;
    }
    1 << seq
}

/// Invocation template for an external DIMACS solver.
///
/// The command runs without a shell.  `{dimacs}` is replaced by the path
/// of the problem file; `{output}` (optional) by a result file path the
/// solver should write.  Without `{output}`, results are read from
/// stdout.  Expected output is the common competition format: an
/// `s SATISFIABLE` / `s UNSATISFIABLE` / `s UNKNOWN` status line and,
/// for satisfiable formulas, `v` lines listing the model.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub command: Vec<String>,
}

impl ExternalSolver {
    /// Splits a template string on whitespace.
    pub fn from_template(template: &str) -> Result<Self, SolverError> {
        let command: Vec<String> = template.split_whitespace().map(str::to_owned).collect();
        if command.is_empty() || !command.iter().any(|t| t.contains("{dimacs}")) {
            return Err(SolverError::BadTemplate);
        }
        Ok(Self { command })
    }
}

/// Runs an external solver on the formula.  The returned model has been
/// validated locally; a solver claiming SAT with a bad or incomplete
/// model is reported as an error, never trusted.
pub fn solve_external(f: &CnfFormula, ext: &ExternalSolver) -> Result<SatResult, SolverError> {
    let start = Instant::now();
    let dir = tempfile::tempdir()?;
    let dimacs_path = dir.path().join("problem.cnf");
    let output_path = dir.path().join("result.txt");
    {
        let mut file = std::fs::File::create(&dimacs_path)?;
        write_dimacs(f, None, &mut file)?;
        file.flush()?;
    }
    let wants_output_file = ext.command.iter().any(|t| t.contains("{output}"));
    let argv: Vec<String> = ext
        .command
        .iter()
        .map(|t| {
            t.replace("{dimacs}", &dimacs_path.to_string_lossy())
                .replace("{output}", &output_path.to_string_lossy())
        })
        .collect();
    let out = Command::new(&argv[0])
        .args(&argv[1..])
        .output()
        .map_err(|source| SolverError::Spawn {
            cmd: argv.join(" "),
            source,
        })?;
    let text = if wants_output_file {
        std::fs::read_to_string(&output_path).map_err(|e| {
            SolverError::Output(format!("result file not readable: {e}"))
        })?
    } else {
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    let outcome = parse_solver_output(&text, f.num_vars())?;
    if let SatOutcome::Sat { model } = &outcome {
        validate_model(f, model)?;
    }
    let stats = SolverStats {
        time_ms: start.elapsed().as_millis() as u64,
        ..SolverStats::default()
    };
    Ok(SatResult { outcome, stats })
}

/// Parses SAT-competition style solver output.
pub fn parse_solver_output(text: &str, num_vars: i32) -> Result<SatOutcome, SolverError> {
    let mut status: Option<&str> = None;
    let mut values: Vec<Option<bool>> = vec![None; num_vars as usize + 1];
    let mut saw_values = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("s ") {
            status = Some(rest.trim());
        } else if let Some(rest) = line.strip_prefix("v ") {
            saw_values = true;
            for tok in rest.split_whitespace() {
                let l: i32 = tok.parse().map_err(|_| {
                    SolverError::Output(format!("bad literal `{tok}` in v line"))
                })?;
                if l == 0 {
                    continue;
                }
                let v = l.unsigned_abs() as usize;
                if v <= num_vars as usize {
                    values[v] = Some(l > 0);
                }
            }
        }
    }
    match status {
        Some("SATISFIABLE") => {
            if !saw_values {
                return Err(SolverError::Output(
                    "SATISFIABLE without v lines".to_string(),
                ));
            }
            let mut model = vec![false; num_vars as usize + 1];
            for v in 1..=num_vars as usize {
                match values[v] {
                    Some(b) => model[v] = b,
                    None => return Err(SolverError::IncompleteModel(v as i32)),
                }
            }
            Ok(SatOutcome::Sat { model })
        }
        Some("UNSATISFIABLE") => Ok(SatOutcome::Unsat),
        Some("UNKNOWN") => Ok(SatOutcome::Unknown),
        Some(other) => Err(SolverError::Output(format!("unknown status `{other}`"))),
        None => Err(SolverError::Output("no `s` status line".to_string())),
    }
}
