//! CNF formulas, semantic variable naming, and Tseitin translation.
//!
//! Variables are positive `i32` indices, literals are nonzero `i32` with
//! sign for polarity (DIMACS convention).  A [`VarMap`] ties every
//! variable to a [`VarKey`] describing what it means, which keeps
//! encodings debuggable and lets SAT models be decoded back into
//! strategies.  Auxiliary Tseitin variables are hash-consed: structurally
//! identical subterms share one definition.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::pomdp::{ActionId, ObsId, StateId};

#[derive(Debug, Error, PartialEq)]
pub enum CnfError {
    #[error("variable key {0} already allocated")]
    DuplicateKey(String),
    #[error("clause is empty")]
    EmptyClause,
    #[error("clause contains {0} and its negation")]
    TautologicalClause(i32),
    #[error("literal {0} does not name an allocated variable")]
    LiteralOutOfRange(i32),
    #[error("dimacs line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A CNF formula in an arena: literals of all clauses concatenated, with
/// end offsets.  Clauses are never empty and never tautological.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CnfFormula {
    num_vars: i32,
    lits: Vec<i32>,
    ends: Vec<u32>,
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> i32 {
        self.num_vars
    }

    pub fn num_clauses(&self) -> usize {
        self.ends.len()
    }

    /// Allocates the next variable and returns its index.
    pub fn new_var(&mut self) -> i32 {
        self.num_vars += 1;
        self.num_vars
    }

    /// Bulk variable allocation used by parsers.
    pub fn ensure_vars(&mut self, n: i32) {
        self.num_vars = self.num_vars.max(n);
    }

    /// Adds a clause, deduplicating repeated literals.  Empty and
    /// tautological clauses are caller bugs and are rejected.
    pub fn add_clause(&mut self, lits: &[i32]) -> Result<(), CnfError> {
        if lits.is_empty() {
            return Err(CnfError::EmptyClause);
        }
        let start = self.lits.len();
        for &l in lits {
            if l == 0 || l.unsigned_abs() as i32 > self.num_vars {
                self.lits.truncate(start);
                return Err(CnfError::LiteralOutOfRange(l));
            }
            if self.lits[start..].contains(&-l) {
                self.lits.truncate(start);
                return Err(CnfError::TautologicalClause(l.abs()));
            }
            if !self.lits[start..].contains(&l) {
                self.lits.push(l);
            }
        }
        self.ends.push(self.lits.len() as u32);
        Ok(())
    }

    pub fn clause(&self, i: usize) -> &[i32] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        &self.lits[start..self.ends[i] as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i32]> + '_ {
        (0..self.num_clauses()).map(|i| self.clause(i))
    }

    pub fn num_literals(&self) -> usize {
        self.lits.len()
    }
}

/// What a CNF variable stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VarKey {
    /// Action `action` is allowed at `state` (per-state form; states of
    /// one observation class are forced equal by the encoding).
    ActionAt { state: StateId, action: ActionId },
    /// Action `action` is allowed in memory state `mem`.
    ActionIn { mem: usize, action: ActionId },
    /// `state` is reachable under the strategy.
    Reach { state: StateId },
    /// (`state`, `mem`) is reachable under the strategy.
    ReachMem { state: StateId, mem: usize },
    /// From `state` the goal is reachable within `step` strategy steps.
    Path { state: StateId, step: usize },
    /// From (`state`, `mem`) the goal is reachable within `step` steps.
    PathMem { state: StateId, mem: usize, step: usize },
    /// Memory moves from `mem` to `next_mem` on observing `obs` after
    /// playing `action`.
    Update {
        mem: usize,
        obs: ObsId,
        action: ActionId,
        next_mem: usize,
    },
    /// Tseitin auxiliary defined as `op` over already-lowered literals.
    Aux { op: AuxOp, children: Box<[i32]> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxOp {
    And,
    Or,
}

impl VarKey {
    pub fn is_aux(&self) -> bool {
        matches!(self, VarKey::Aux { .. })
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::ActionAt { state, action } => write!(f, "A {state} {action}"),
            VarKey::ActionIn { mem, action } => write!(f, "AM {mem} {action}"),
            VarKey::Reach { state } => write!(f, "C {state}"),
            VarKey::ReachMem { state, mem } => write!(f, "CM {state} {mem}"),
            VarKey::Path { state, step } => write!(f, "P {state} {step}"),
            VarKey::PathMem { state, mem, step } => write!(f, "PM {state} {mem} {step}"),
            VarKey::Update {
                mem,
                obs,
                action,
                next_mem,
            } => write!(f, "M {mem} {obs} {action} {next_mem}"),
            VarKey::Aux { op, children } => {
                write!(
                    f,
                    "AUX {} {:?}",
                    match op {
                        AuxOp::And => "and",
                        AuxOp::Or => "or",
                    },
                    children
                )
            }
        }
    }
}

/// Injective, bidirectional map between variables and their meanings.
/// Variables allocated directly on the formula simply have no key.
#[derive(Debug, Clone, Default)]
pub struct VarMap {
    by_key: HashMap<VarKey, i32>,
    by_var: Vec<Option<VarKey>>,
}

impl VarMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocates a fresh variable for `key`.  Reusing a key is a bug in
    /// the caller.
    pub fn fresh_var(&mut self, f: &mut CnfFormula, key: VarKey) -> Result<i32, CnfError> {
        if self.by_key.contains_key(&key) {
            return Err(CnfError::DuplicateKey(key.to_string()));
        }
        let v = f.new_var();
        self.by_key.insert(key.clone(), v);
        if self.by_var.len() < v as usize {
            self.by_var.resize(v as usize, None);
        }
        self.by_var[v as usize - 1] = Some(key);
        Ok(v)
    }

    pub fn lookup(&self, key: &VarKey) -> Option<i32> {
        self.by_key.get(key).copied()
    }

    /// The variable for `key`; panics if absent (encoder-internal use).
    pub fn var(&self, key: &VarKey) -> i32 {
        self.by_key[key]
    }

    pub fn key_of(&self, var: i32) -> Option<&VarKey> {
        self.by_var.get(var as usize - 1).and_then(|k| k.as_ref())
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn num_aux(&self) -> usize {
        self.by_key.keys().filter(|k| k.is_aux()).count()
    }

    /// Named (non-auxiliary) entries in variable order.
    pub fn iter_named(&self) -> impl Iterator<Item = (i32, &VarKey)> + '_ {
        self.by_var
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.as_ref().map(|k| (i as i32 + 1, k)))
            .filter(|(_, k)| !k.is_aux())
    }
}

/// Boolean expression tree over CNF literals.  Negation appears only on
/// literals; the constructors fold constants and flatten nesting.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Const(bool),
    Lit(i32),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

impl BoolExpr {
    pub fn lit(l: i32) -> Self {
        assert!(l != 0);
        BoolExpr::Lit(l)
    }

    pub fn and(children: Vec<BoolExpr>) -> Self {
        Self::gate(AuxOp::And, children)
    }

    pub fn or(children: Vec<BoolExpr>) -> Self {
        Self::gate(AuxOp::Or, children)
    }

    fn gate(op: AuxOp, children: Vec<BoolExpr>) -> Self {
        // `absorbing` short-circuits the gate; `neutral` drops out.
        let absorbing = matches!(op, AuxOp::Or);
        let mut flat: Vec<BoolExpr> = Vec::with_capacity(children.len());
        for c in children {
            match c {
                BoolExpr::Const(b) if b == absorbing => return BoolExpr::Const(absorbing),
                BoolExpr::Const(_) => {}
                BoolExpr::And(inner) if matches!(op, AuxOp::And) => flat.extend(inner),
                BoolExpr::Or(inner) if matches!(op, AuxOp::Or) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        // Duplicate literals collapse; complementary literals decide the
        // gate outright.
        let mut seen: Vec<i32> = Vec::new();
        let mut out: Vec<BoolExpr> = Vec::with_capacity(flat.len());
        for c in flat {
            if let BoolExpr::Lit(l) = c {
                if seen.contains(&-l) {
                    return BoolExpr::Const(absorbing);
                }
                if seen.contains(&l) {
                    continue;
                }
                seen.push(l);
            }
            out.push(c);
        }
        match out.len() {
            0 => BoolExpr::Const(!absorbing),
            1 => out.into_iter().next().unwrap(),
            _ => match op {
                AuxOp::And => BoolExpr::And(out),
                AuxOp::Or => BoolExpr::Or(out),
            },
        }
    }

    /// Evaluates under an assignment (`assign[v]` for variable `v`,
    /// index 0 unused).
    pub fn eval(&self, assign: &[bool]) -> bool {
        match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Lit(l) => {
                let v = assign[l.unsigned_abs() as usize];
                if *l > 0 {
                    v
                } else {
                    !v
                }
            }
            BoolExpr::And(cs) => cs.iter().all(|c| c.eval(assign)),
            BoolExpr::Or(cs) => cs.iter().any(|c| c.eval(assign)),
        }
    }
}

/// Whether Tseitin definitions carry both implication directions.
/// `ForwardOnly` keeps `defined ⇒ definition` only; for the encodings in
/// this crate that preserves satisfiability and shrinks formulas, but a
/// single formula must use one mode throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TseitinMode {
    #[default]
    Full,
    ForwardOnly,
}

/// Encodes `lhs ⇔ expr` (or `lhs ⇒ expr` in forward-only mode).
///
/// A single gate is written directly onto `lhs` with no auxiliary
/// variable.  Nested gates are lowered to hash-consed auxiliaries first,
/// one per structurally distinct subterm.
pub fn tseitin_iff(
    f: &mut CnfFormula,
    map: &mut VarMap,
    lhs: i32,
    expr: &BoolExpr,
    mode: TseitinMode,
) -> Result<(), CnfError> {
    let full = mode == TseitinMode::Full;
    match expr {
        BoolExpr::Const(true) => f.add_clause(&[lhs]),
        BoolExpr::Const(false) => f.add_clause(&[-lhs]),
        BoolExpr::Lit(l) => {
            f.add_clause(&[-lhs, *l])?;
            if full {
                f.add_clause(&[lhs, -l])?;
            }
            Ok(())
        }
        BoolExpr::And(cs) => {
            let lits = lower_children(f, map, cs, mode)?;
            define_gate(f, lhs, AuxOp::And, &lits, full)
        }
        BoolExpr::Or(cs) => {
            let lits = lower_children(f, map, cs, mode)?;
            define_gate(f, lhs, AuxOp::Or, &lits, full)
        }
    }
}

fn lower_children(
    f: &mut CnfFormula,
    map: &mut VarMap,
    children: &[BoolExpr],
    mode: TseitinMode,
) -> Result<Vec<i32>, CnfError> {
    children.iter().map(|c| lower(f, map, c, mode)).collect()
}

/// Reduces an expression to a single literal, introducing defined
/// auxiliaries for gates.
fn lower(
    f: &mut CnfFormula,
    map: &mut VarMap,
    expr: &BoolExpr,
    mode: TseitinMode,
) -> Result<i32, CnfError> {
    match expr {
        BoolExpr::Lit(l) => Ok(*l),
        BoolExpr::Const(_) => unreachable!("constructors fold constants below gates"),
        BoolExpr::And(cs) | BoolExpr::Or(cs) => {
            let op = if matches!(expr, BoolExpr::And(_)) {
                AuxOp::And
            } else {
                AuxOp::Or
            };
            let lits = lower_children(f, map, cs, mode)?;
            let key = VarKey::Aux {
                op,
                children: lits.clone().into_boxed_slice(),
            };
            if let Some(v) = map.lookup(&key) {
                return Ok(v);
            }
            let v = map.fresh_var(f, key)?;
            define_gate(f, v, op, &lits, mode == TseitinMode::Full)?;
            Ok(v)
        }
    }
}

/// Defining clauses for `out ⇔ op(lits)`; reverse direction only when
/// `full`.
fn define_gate(
    f: &mut CnfFormula,
    out: i32,
    op: AuxOp,
    lits: &[i32],
    full: bool,
) -> Result<(), CnfError> {
    match op {
        AuxOp::And => {
            for &l in lits {
                f.add_clause(&[-out, l])?;
            }
            if full {
                let mut rev = Vec::with_capacity(lits.len() + 1);
                rev.push(out);
                rev.extend(lits.iter().map(|&l| -l));
                f.add_clause(&rev)?;
            }
        }
        AuxOp::Or => {
            let mut fwd = Vec::with_capacity(lits.len() + 1);
            fwd.push(-out);
            fwd.extend_from_slice(lits);
            f.add_clause(&fwd)?;
            if full {
                for &l in lits {
                    f.add_clause(&[out, -l])?;
                }
            }
        }
    }
    Ok(())
}

/// Writes the formula in DIMACS CNF format.  Named map entries become
/// `c <key> <var>` comment lines ahead of the header.
pub fn write_dimacs(
    f: &CnfFormula,
    map: Option<&VarMap>,
    w: &mut impl Write,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(w);
    if let Some(map) = map {
        for (v, key) in map.iter_named() {
            writeln!(out, "c {key} {v}")?;
        }
    }
    writeln!(out, "p cnf {} {}", f.num_vars(), f.num_clauses())?;
    for clause in f.iter() {
        for &l in clause {
            write!(out, "{l} ")?;
        }
        writeln!(out, "0")?;
    }
    out.flush()
}

/// Parses DIMACS CNF.  Comments are allowed anywhere; clauses may span
/// lines.  Repeated literals are deduplicated and tautological clauses
/// dropped, mirroring [`CnfFormula`]'s invariants.
pub fn parse_dimacs(r: &mut impl BufRead) -> Result<CnfFormula, CnfError> {
    let mut f = CnfFormula::new();
    let mut header: Option<(i32, usize)> = None;
    let mut current: Vec<i32> = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CnfError::Parse {
            line: no + 1,
            msg: e.to_string(),
        })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('c') || text.starts_with('%') {
            continue;
        }
        if let Some(rest) = text.strip_prefix("p ") {
            let mut it = rest.split_whitespace();
            let bad = |msg: &str| CnfError::Parse {
                line: no + 1,
                msg: msg.to_string(),
            };
            if it.next() != Some("cnf") {
                return Err(bad("expected `p cnf <vars> <clauses>`"));
            }
            let vars: i32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("invalid variable count"))?;
            let clauses: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("invalid clause count"))?;
            f.ensure_vars(vars);
            header = Some((vars, clauses));
            continue;
        }
        if header.is_none() {
            return Err(CnfError::Parse {
                line: no + 1,
                msg: "clause before `p cnf` header".to_string(),
            });
        }
        for tok in text.split_whitespace() {
            let l: i32 = tok.parse().map_err(|_| CnfError::Parse {
                line: no + 1,
                msg: format!("invalid literal `{tok}`"),
            })?;
            if l == 0 {
                if current.is_empty() {
                    return Err(CnfError::Parse {
                        line: no + 1,
                        msg: "empty clause".to_string(),
                    });
                }
                let tautological = current.iter().any(|&x| current.contains(&-x));
                if !tautological {
                    f.ensure_vars(current.iter().map(|l| l.abs()).max().unwrap_or(0));
                    f.add_clause(&current).map_err(|e| CnfError::Parse {
                        line: no + 1,
                        msg: e.to_string(),
                    })?;
                }
                current.clear();
            } else {
                current.push(l);
            }
        }
    }
    if !current.is_empty() {
        return Err(CnfError::Parse {
            line: 0,
            msg: "unterminated clause at end of input".to_string(),
        });
    }
    Ok(f)
}
