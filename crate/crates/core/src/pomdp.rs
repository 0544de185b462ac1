//! POMDP model type, text format, and support-level operations.
//!
//! A model is a finite set of states with one observation per state, a
//! finite action set, and a total transition function: every
//! (state, action) pair carries a probability distribution over successor
//! states.  One state is initial and one is the goal.  The goal must be
//! absorbing, so "reach the goal" and "reach and stay in the goal" agree.
//!
//! Probabilities are kept as `f64` but every algorithm in this crate only
//! reads their supports; values matter solely for validation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

/// Index of a state in [`Pomdp::state_names`].
pub type StateId = usize;
/// Index of an action in [`Pomdp::action_names`].
pub type ActionId = usize;
/// Index of an observation in [`Pomdp::obs_names`].
pub type ObsId = usize;

/// Tolerance for transition rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Structural defect in a model.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model has no states")]
    NoStates,
    #[error("model has no actions")]
    NoActions,
    #[error("duplicate identifier `{0}`")]
    DuplicateName(String),
    #[error("state `{state}` has no observation")]
    MissingObservation { state: String },
    #[error("no transitions for state `{state}` under action `{action}`")]
    MissingRow { state: String, action: String },
    #[error("duplicate transition `{state}` `{action}` `{succ}`")]
    DuplicateTransition {
        state: String,
        action: String,
        succ: String,
    },
    #[error("transition `{state}` `{action}` `{succ}`: probability {prob} outside (0, 1]")]
    BadProbability {
        state: String,
        action: String,
        succ: String,
        prob: f64,
    },
    #[error("state `{state}` action `{action}`: probabilities sum to {sum}")]
    BadRowSum {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("goal state `{goal}` is not absorbing")]
    GoalNotAbsorbing { goal: String },
    #[error("index {index} out of range for {what}")]
    IndexOutOfRange { what: &'static str, index: usize },
    #[error("target set is empty")]
    EmptyTargetSet,
}

/// A validated model.  Construct through [`Pomdp::new`], [`parse_pomdp`],
/// or [`RawPomdp::normalize_goal`]; all invariants hold afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    obs_names: Vec<String>,
    /// `trans[s][a]` is a nonempty list of (successor, probability) pairs,
    /// sorted by successor id, probabilities in (0, 1] summing to one.
    trans: Vec<Vec<Vec<(StateId, f64)>>>,
    obs_of: Vec<ObsId>,
    initial: StateId,
    goal: StateId,
}

impl Pomdp {
    /// Validates and builds a model.  `trans` must be indexed
    /// `[state][action]`; rows may be unsorted but must not repeat a
    /// successor.
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        obs_names: Vec<String>,
        trans: Vec<Vec<Vec<(StateId, f64)>>>,
        obs_of: Vec<ObsId>,
        initial: StateId,
        goal: StateId,
    ) -> Result<Self, ModelError> {
        let raw = RawPomdp {
            state_names,
            action_names,
            obs_names,
            trans,
            obs_of,
            initial,
            targets: vec![goal],
        };
        raw.validate_absorbing_goal()
    }

    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_observations(&self) -> usize {
        self.obs_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn obs_names(&self) -> &[String] {
        &self.obs_names
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.state_names[s]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn obs_name(&self, z: ObsId) -> &str {
        &self.obs_names[z]
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn goal(&self) -> StateId {
        self.goal
    }

    pub fn obs_of(&self, s: StateId) -> ObsId {
        self.obs_of[s]
    }

    /// Successor distribution of (s, a), sorted by successor id.
    pub fn successors(&self, s: StateId, a: ActionId) -> &[(StateId, f64)] {
        &self.trans[s][a]
    }

    /// States reachable from `s` under `a` in one step with positive
    /// probability.
    pub fn support_successors(&self, s: StateId, a: ActionId) -> impl Iterator<Item = StateId> + '_ {
        self.trans[s][a].iter().map(|&(t, _)| t)
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn obs_index(&self, name: &str) -> Option<ObsId> {
        self.obs_names.iter().position(|n| n == name)
    }

    /// States grouped by observation, indexed by observation id.  An
    /// observation that labels no state yields an empty group.
    pub fn observation_classes(&self) -> Vec<Vec<StateId>> {
        let mut classes = vec![Vec::new(); self.obs_names.len()];
        for (s, &z) in self.obs_of.iter().enumerate() {
            classes[z].push(s);
        }
        classes
    }

    /// Total number of positive-probability transitions.
    pub fn num_edges(&self) -> usize {
        self.trans
            .iter()
            .flat_map(|rows| rows.iter())
            .map(|row| row.len())
            .sum()
    }

    /// Whether the goal's observation labels no other state.  Algorithms
    /// that reason over belief supports rely on this.
    pub fn goal_obs_dedicated(&self) -> bool {
        let gz = self.obs_of[self.goal];
        self.obs_of
            .iter()
            .enumerate()
            .all(|(s, &z)| z != gz || s == self.goal)
    }

    /// Back to the unvalidated form with the goal as the single target,
    /// e.g. to re-run [`RawPomdp::normalize_goal`].
    pub fn to_raw(&self) -> RawPomdp {
        RawPomdp {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            obs_names: self.obs_names.clone(),
            trans: self.trans.clone(),
            obs_of: self.obs_of.clone(),
            initial: self.initial,
            targets: vec![self.goal],
        }
    }
}

/// An unvalidated model with a target *set* instead of a single absorbing
/// goal.  [`RawPomdp::normalize_goal`] turns it into a [`Pomdp`].
#[derive(Debug, Clone)]
pub struct RawPomdp {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub obs_names: Vec<String>,
    pub trans: Vec<Vec<Vec<(StateId, f64)>>>,
    pub obs_of: Vec<ObsId>,
    pub initial: StateId,
    pub targets: Vec<StateId>,
}

impl RawPomdp {
    /// Produces an equivalent model with a single absorbing goal carrying
    /// a dedicated observation.
    ///
    /// If the target set is a single state that is already absorbing and
    /// alone in its observation class, the model is returned unchanged
    /// with that state as the goal (which makes the operation idempotent).
    /// Otherwise a fresh goal state and a fresh observation are added and
    /// every target state's outgoing transitions are replaced by a
    /// probability-one jump to the fresh goal.
    pub fn normalize_goal(&self) -> Result<Pomdp, ModelError> {
        self.check_shape()?;
        if self.targets.is_empty() {
            return Err(ModelError::EmptyTargetSet);
        }
        for &t in &self.targets {
            if t >= self.state_names.len() {
                return Err(ModelError::IndexOutOfRange {
                    what: "target state",
                    index: t,
                });
            }
        }
        if let [t] = self.targets[..] {
            let absorbing = self.trans[t]
                .iter()
                .all(|row| row.len() == 1 && row[0].0 == t);
            let dedicated = self
                .obs_of
                .iter()
                .enumerate()
                .all(|(s, &z)| (z == self.obs_of[t]) == (s == t));
            if absorbing && dedicated {
                return self.clone().validate_absorbing_goal();
            }
        }

        let mut out = self.clone();
        let goal_name = unique_name("G", &out.state_names);
        let goal_obs_name = unique_name("zG", &out.obs_names);
        let g: StateId = out.state_names.len();
        let zg: ObsId = out.obs_names.len();
        out.state_names.push(goal_name);
        out.obs_names.push(goal_obs_name);
        out.obs_of.push(zg);
        let num_actions = out.action_names.len();
        for &t in &self.targets {
            out.trans[t] = vec![vec![(g, 1.0)]; num_actions];
        }
        out.trans.push(vec![vec![(g, 1.0)]; num_actions]);
        out.targets = vec![g];
        out.validate_absorbing_goal()
    }

    fn check_shape(&self) -> Result<(), ModelError> {
        let ns = self.state_names.len();
        let na = self.action_names.len();
        let nz = self.obs_names.len();
        if ns == 0 {
            return Err(ModelError::NoStates);
        }
        if na == 0 {
            return Err(ModelError::NoActions);
        }
        for names in [&self.state_names, &self.action_names, &self.obs_names] {
            let mut seen = BTreeSet::new();
            for n in names.iter() {
                if !seen.insert(n) {
                    return Err(ModelError::DuplicateName(n.clone()));
                }
            }
        }
        if self.obs_of.len() != ns {
            return Err(ModelError::MissingObservation {
                state: self.state_names[self.obs_of.len().min(ns - 1)].clone(),
            });
        }
        for (s, &z) in self.obs_of.iter().enumerate() {
            if z >= nz {
                return Err(ModelError::IndexOutOfRange {
                    what: "observation",
                    index: z,
                });
            }
            let _ = s;
        }
        if self.initial >= ns {
            return Err(ModelError::IndexOutOfRange {
                what: "initial state",
                index: self.initial,
            });
        }
        if self.trans.len() != ns {
            return Err(ModelError::MissingRow {
                state: self.state_names[self.trans.len().min(ns - 1)].clone(),
                action: self.action_names[0].clone(),
            });
        }
        for (s, rows) in self.trans.iter().enumerate() {
            if rows.len() != na {
                return Err(ModelError::MissingRow {
                    state: self.state_names[s].clone(),
                    action: self.action_names[rows.len().min(na - 1)].clone(),
                });
            }
            for (a, row) in rows.iter().enumerate() {
                if row.is_empty() {
                    return Err(ModelError::MissingRow {
                        state: self.state_names[s].clone(),
                        action: self.action_names[a].clone(),
                    });
                }
                let mut seen = BTreeSet::new();
                let mut sum = 0.0;
                for &(t, p) in row {
                    if t >= ns {
                        return Err(ModelError::IndexOutOfRange {
                            what: "successor state",
                            index: t,
                        });
                    }
                    if !seen.insert(t) {
                        return Err(ModelError::DuplicateTransition {
                            state: self.state_names[s].clone(),
                            action: self.action_names[a].clone(),
                            succ: self.state_names[t].clone(),
                        });
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(ModelError::BadProbability {
                            state: self.state_names[s].clone(),
                            action: self.action_names[a].clone(),
                            succ: self.state_names[t].clone(),
                            prob: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::BadRowSum {
                        state: self.state_names[s].clone(),
                        action: self.action_names[a].clone(),
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Validates shape and requires `targets` to be a single absorbing
    /// state, which becomes the goal.
    fn validate_absorbing_goal(self) -> Result<Pomdp, ModelError> {
        self.check_shape()?;
        let [goal] = self.targets[..] else {
            return Err(ModelError::EmptyTargetSet);
        };
        if goal >= self.state_names.len() {
            return Err(ModelError::IndexOutOfRange {
                what: "goal state",
                index: goal,
            });
        }
        let absorbing = self.trans[goal]
            .iter()
            .all(|row| row.len() == 1 && row[0].0 == goal);
        if !absorbing {
            return Err(ModelError::GoalNotAbsorbing {
                goal: self.state_names[goal].clone(),
            });
        }
        let mut trans = self.trans;
        for rows in &mut trans {
            for row in rows.iter_mut() {
                row.sort_by_key(|&(t, _)| t);
            }
        }
        Ok(Pomdp {
            state_names: self.state_names,
            action_names: self.action_names,
            obs_names: self.obs_names,
            trans,
            obs_of: self.obs_of,
            initial: self.initial,
            goal,
        })
    }
}

fn unique_name(base: &str, taken: &[String]) -> String {
    if !taken.iter().any(|n| n == base) {
        return base.to_string();
    }
    for i in 1.. {
        let candidate = format!("{base}{i}");
        if !taken.iter().any(|n| n == &candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// Parse failure, with 1-based line and column of the offending token.
#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{source} (near line {line})")]
    Model { line: usize, source: ModelError },
}

/// Parses the line-oriented model format, repairing a non-absorbing goal
/// by redirecting it to a fresh absorbing goal state.
pub fn parse_pomdp(text: &str) -> Result<Pomdp, ParseError> {
    parse_with_mode(text, false)
}

/// Like [`parse_pomdp`] but rejects a non-absorbing goal instead of
/// repairing it.
pub fn parse_pomdp_strict(text: &str) -> Result<Pomdp, ParseError> {
    parse_with_mode(text, true)
}

struct Line<'a> {
    no: usize,
    tokens: Vec<(usize, &'a str)>,
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut col = 0;
        for piece in content.split_whitespace() {
            let at = content[col..].find(piece).unwrap() + col;
            tokens.push((at + 1, piece));
            col = at + piece.len();
        }
        if !tokens.is_empty() {
            lines.push(Line { no: i + 1, tokens });
        }
    }
    lines
}

fn check_ident(line: usize, col: usize, tok: &str) -> Result<(), ParseError> {
    if tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !tok.is_empty() {
        Ok(())
    } else {
        Err(ParseError::Syntax {
            line,
            col,
            msg: format!("invalid identifier `{tok}`"),
        })
    }
}

fn parse_with_mode(text: &str, strict: bool) -> Result<Pomdp, ParseError> {
    let lines = tokenize(text);
    let last_line = lines.last().map_or(1, |l| l.no);
    let mut it = lines.into_iter().peekable();

    let mut section = |key: &str| -> Result<(usize, Vec<(usize, String)>), ParseError> {
        match it.next() {
            Some(line) if line.tokens[0].1 == key => {
                let ids = line.tokens[1..]
                    .iter()
                    .map(|&(c, t)| (c, t.to_string()))
                    .collect();
                Ok((line.no, ids))
            }
            Some(line) => Err(ParseError::Syntax {
                line: line.no,
                col: line.tokens[0].0,
                msg: format!("expected `{key}`, found `{}`", line.tokens[0].1),
            }),
            None => Err(ParseError::Syntax {
                line: last_line,
                col: 1,
                msg: format!("expected `{key}`, found end of input"),
            }),
        }
    };

    let named_list = |key: &str,
                      (line, ids): (usize, Vec<(usize, String)>)|
     -> Result<Vec<String>, ParseError> {
        if ids.is_empty() {
            return Err(ParseError::Syntax {
                line,
                col: 1,
                msg: format!("`{key}` needs at least one identifier"),
            });
        }
        for (col, id) in &ids {
            check_ident(line, *col, id)?;
        }
        Ok(ids.into_iter().map(|(_, id)| id).collect())
    };

    let state_names = named_list("states:", section("states:")?)?;
    let action_names = named_list("actions:", section("actions:")?)?;
    let obs_names = named_list("observations:", section("observations:")?)?;

    let lookup = |names: &[String], what: &str, line: usize, col: usize, id: &str| {
        names
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| ParseError::Syntax {
                line,
                col,
                msg: format!("unknown {what} `{id}`"),
            })
    };

    let single = |key: &str, got: (usize, Vec<(usize, String)>)| -> Result<(usize, usize, String), ParseError> {
        let (line, ids) = got;
        match &ids[..] {
            [(col, id)] => Ok((line, *col, id.clone())),
            [] => Err(ParseError::Syntax {
                line,
                col: 1,
                msg: format!("`{key}` needs exactly one identifier"),
            }),
            [_, (col, extra), ..] => Err(ParseError::Syntax {
                line,
                col: *col,
                msg: format!("unexpected token `{extra}` after `{key}`"),
            }),
        }
    };

    let (l, c, init_id) = single("init:", section("init:")?)?;
    let initial = lookup(&state_names, "state", l, c, &init_id)?;
    let (l, c, goal_id) = single("goal:", section("goal:")?)?;
    let goal = lookup(&state_names, "state", l, c, &goal_id)?;

    let ns = state_names.len();
    let na = action_names.len();
    let mut obs_of: Vec<Option<ObsId>> = vec![None; ns];
    let mut trans: Vec<Vec<Vec<(StateId, f64)>>> = vec![vec![Vec::new(); na]; ns];
    let mut row_line = vec![vec![0usize; na]; ns];

    while let Some(line) = it.next() {
        let (col0, key) = line.tokens[0];
        match key {
            "obs:" => {
                let [_, (cs, s), (cz, z)] = line.tokens[..] else {
                    return Err(ParseError::Syntax {
                        line: line.no,
                        col: col0,
                        msg: "`obs:` takes a state and an observation".into(),
                    });
                };
                let s = lookup(&state_names, "state", line.no, cs, s)?;
                let z = lookup(&obs_names, "observation", line.no, cz, z)?;
                if obs_of[s].is_some() {
                    return Err(ParseError::Syntax {
                        line: line.no,
                        col: cs,
                        msg: format!("observation of `{}` given twice", state_names[s]),
                    });
                }
                obs_of[s] = Some(z);
            }
            "trans:" => {
                let [_, (cs, s), (ca, a), (ct, t), (cp, p)] = line.tokens[..] else {
                    return Err(ParseError::Syntax {
                        line: line.no,
                        col: col0,
                        msg: "`trans:` takes state, action, successor, probability".into(),
                    });
                };
                let s = lookup(&state_names, "state", line.no, cs, s)?;
                let a = lookup(&action_names, "action", line.no, ca, a)?;
                let t = lookup(&state_names, "state", line.no, ct, t)?;
                let prob: f64 = p.parse().map_err(|_| ParseError::Syntax {
                    line: line.no,
                    col: cp,
                    msg: format!("invalid probability `{p}`"),
                })?;
                if trans[s][a].iter().any(|&(u, _)| u == t) {
                    return Err(ParseError::Model {
                        line: line.no,
                        source: ModelError::DuplicateTransition {
                            state: state_names[s].clone(),
                            action: action_names[a].clone(),
                            succ: state_names[t].clone(),
                        },
                    });
                }
                if trans[s][a].is_empty() {
                    row_line[s][a] = line.no;
                }
                trans[s][a].push((t, prob));
            }
            other => {
                return Err(ParseError::Syntax {
                    line: line.no,
                    col: col0,
                    msg: format!("expected `obs:` or `trans:`, found `{other}`"),
                });
            }
        }
    }

    let obs_of: Vec<ObsId> = obs_of
        .into_iter()
        .enumerate()
        .map(|(s, z)| {
            z.ok_or_else(|| ParseError::Model {
                line: last_line,
                source: ModelError::MissingObservation {
                    state: state_names[s].clone(),
                },
            })
        })
        .collect::<Result<_, _>>()?;

    let raw = RawPomdp {
        state_names,
        action_names,
        obs_names,
        trans,
        obs_of,
        initial,
        targets: vec![goal],
    };

    let err_states = raw.state_names.clone();
    let err_actions = raw.action_names.clone();
    let wrap = move |e: ModelError| {
        let line = match &e {
            ModelError::BadRowSum { state, action, .. }
            | ModelError::BadProbability { state, action, .. }
            | ModelError::MissingRow { state, action } => {
                let s = err_states.iter().position(|n| n == state);
                let a = err_actions.iter().position(|n| n == action);
                match (s, a) {
                    (Some(s), Some(a)) if row_line[s][a] != 0 => row_line[s][a],
                    _ => last_line,
                }
            }
            _ => last_line,
        };
        ParseError::Model { line, source: e }
    };

    if strict {
        return raw.validate_absorbing_goal().map_err(wrap);
    }
    match raw.clone().validate_absorbing_goal() {
        Ok(p) => Ok(p),
        Err(ModelError::GoalNotAbsorbing { .. }) => raw.normalize_goal().map_err(wrap),
        Err(e) => Err(wrap(e)),
    }
}

/// Renders a model in the format accepted by [`parse_pomdp`].
pub fn format_pomdp(p: &Pomdp) -> String {
    let mut out = String::new();
    let join = |names: &[String]| names.join(" ");
    let _ = writeln!(out, "states: {}", join(p.state_names()));
    let _ = writeln!(out, "actions: {}", join(p.action_names()));
    let _ = writeln!(out, "observations: {}", join(p.obs_names()));
    let _ = writeln!(out, "init: {}", p.state_name(p.initial()));
    let _ = writeln!(out, "goal: {}", p.state_name(p.goal()));
    for s in 0..p.num_states() {
        let _ = writeln!(out, "obs: {} {}", p.state_name(s), p.obs_name(p.obs_of(s)));
    }
    for s in 0..p.num_states() {
        for a in 0..p.num_actions() {
            for &(t, prob) in p.successors(s, a) {
                let _ = writeln!(
                    out,
                    "trans: {} {} {} {}",
                    p.state_name(s),
                    p.action_name(a),
                    p.state_name(t),
                    prob
                );
            }
        }
    }
    out
}
