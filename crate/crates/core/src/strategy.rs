//! Finite-memory strategies: representation, text serialization,
//! product-graph verification, extraction from SAT models, and a
//! brute-force existence oracle for tiny instances.
//!
//! A strategy here carries supports only.  Action selection and memory
//! update are uniform over their supports; for almost-sure reachability
//! only the supports matter, so nothing more is stored.
//!
//! Verification is independent of the SAT route: it builds the product
//! of model states and memory states and checks that every node
//! reachable from the start can still reach the goal.  The brute-force
//! oracle enumerates strategies outright and accepts with the same
//! verifier, which makes it a trustworthy reference for small models.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::cnf::{VarKey, VarMap};
use crate::pomdp::{ActionId, ObsId, Pomdp, StateId};

/// Default enumeration budget for [`brute_force_exists`].
pub const DEFAULT_ORACLE_CAP: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("strategy needs at least one memory state")]
    NoMemory,
    #[error("initial memory {m0} out of range for {mu} memory states")]
    BadInitialMemory { m0: usize, mu: usize },
    #[error("empty action support for memory state {mem}")]
    EmptyActionSupport { mem: usize },
    #[error("empty memory update for memory {mem}, observation {obs}, action {action}")]
    EmptyUpdate {
        mem: usize,
        obs: ObsId,
        action: ActionId,
    },
    #[error("strategy shape does not match: {0}")]
    ShapeMismatch(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read a strategy off this model: {0}")]
    Extraction(String),
}

/// A strategy with `mu` memory states.  Per memory state it holds the
/// set of actions played (uniformly); per (memory, observation, action)
/// triple the set of successor memory states.  The observation consumed
/// by an update is the one emitted by the *successor* state of the move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteMemoryStrategy {
    m0: usize,
    action_support: Vec<BTreeSet<ActionId>>,
    /// Indexed `[memory][observation][action]`.
    update_support: Vec<Vec<Vec<BTreeSet<usize>>>>,
    deterministic: bool,
}

impl FiniteMemoryStrategy {
    pub fn new(
        m0: usize,
        action_support: Vec<BTreeSet<ActionId>>,
        update_support: Vec<Vec<Vec<BTreeSet<usize>>>>,
    ) -> Result<Self, StrategyError> {
        let mu = action_support.len();
        if mu == 0 {
            return Err(StrategyError::NoMemory);
        }
        if m0 >= mu {
            return Err(StrategyError::BadInitialMemory { m0, mu });
        }
        if update_support.len() != mu {
            return Err(StrategyError::ShapeMismatch(format!(
                "{} update rows for {mu} memory states",
                update_support.len()
            )));
        }
        let num_obs = update_support[0].len();
        let num_actions = update_support[0].first().map_or(0, Vec::len);
        for (mem, sup) in action_support.iter().enumerate() {
            if sup.is_empty() {
                return Err(StrategyError::EmptyActionSupport { mem });
            }
            if sup.iter().any(|&a| a >= num_actions) {
                return Err(StrategyError::ShapeMismatch(format!(
                    "action id out of range in memory state {mem}"
                )));
            }
        }
        for (mem, per_obs) in update_support.iter().enumerate() {
            if per_obs.len() != num_obs {
                return Err(StrategyError::ShapeMismatch(format!(
                    "ragged observation dimension in memory state {mem}"
                )));
            }
            for (obs, per_action) in per_obs.iter().enumerate() {
                if per_action.len() != num_actions {
                    return Err(StrategyError::ShapeMismatch(format!(
                        "ragged action dimension at memory {mem}, observation {obs}"
                    )));
                }
                for (action, mems) in per_action.iter().enumerate() {
                    if mems.is_empty() {
                        return Err(StrategyError::EmptyUpdate { mem, obs, action });
                    }
                    if mems.iter().any(|&m| m >= mu) {
                        return Err(StrategyError::ShapeMismatch(format!(
                            "memory id out of range at memory {mem}, observation {obs}"
                        )));
                    }
                }
            }
        }
        let deterministic = action_support.iter().all(|s| s.len() == 1)
            && update_support
                .iter()
                .flatten()
                .flatten()
                .all(|s| s.len() == 1);
        Ok(Self {
            m0,
            action_support,
            update_support,
            deterministic,
        })
    }

    /// Single-memory strategy playing `support` regardless of history.
    pub fn constant(
        support: BTreeSet<ActionId>,
        num_obs: usize,
        num_actions: usize,
    ) -> Result<Self, StrategyError> {
        let stay: BTreeSet<usize> = [0].into();
        Self::new(
            0,
            vec![support],
            vec![vec![vec![stay; num_actions]; num_obs]],
        )
    }

    pub fn mu(&self) -> usize {
        self.action_support.len()
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn num_observations(&self) -> usize {
        self.update_support[0].len()
    }

    pub fn num_actions(&self) -> usize {
        self.update_support[0].first().map_or(0, Vec::len)
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn action_support(&self, mem: usize) -> &BTreeSet<ActionId> {
        &self.action_support[mem]
    }

    pub fn update_support(&self, mem: usize, obs: ObsId, action: ActionId) -> &BTreeSet<usize> {
        &self.update_support[mem][obs][action]
    }

    fn check_shape(&self, p: &Pomdp) -> Result<(), StrategyError> {
        if self.num_observations() != p.num_observations()
            || self.num_actions() != p.num_actions()
        {
            return Err(StrategyError::ShapeMismatch(format!(
                "strategy over {} observations and {} actions, model has {} and {}",
                self.num_observations(),
                self.num_actions(),
                p.num_observations(),
                p.num_actions()
            )));
        }
        Ok(())
    }
}

/// Renders a strategy in the text format of [`parse_strategy`], using the
/// model's action and observation names.
pub fn write_strategy(s: &FiniteMemoryStrategy, p: &Pomdp) -> Result<String, StrategyError> {
    s.check_shape(p)?;
    let mut out = String::new();
    let _ = writeln!(out, "mu: {}", s.mu());
    let _ = writeln!(out, "m0: {}", s.m0());
    let _ = writeln!(out, "deterministic: {}", s.is_deterministic());
    for m in 0..s.mu() {
        let names: Vec<&str> = s
            .action_support(m)
            .iter()
            .map(|&a| p.action_name(a))
            .collect();
        let _ = writeln!(out, "actions: {m} {}", names.join(" "));
    }
    for m in 0..s.mu() {
        for z in 0..p.num_observations() {
            for a in 0..p.num_actions() {
                let mems: Vec<String> = s
                    .update_support(m, z, a)
                    .iter()
                    .map(|m2| m2.to_string())
                    .collect();
                let _ = writeln!(
                    out,
                    "updates: {m} {} {} {}",
                    p.obs_name(z),
                    p.action_name(a),
                    mems.join(" ")
                );
            }
        }
    }
    Ok(out)
}

/// Parses the strategy text format:
///
/// ```text
/// mu: <count>
/// m0: <index>
/// deterministic: <true|false>
/// actions: <memory> <action-name>...
/// updates: <memory> <observation-name> <action-name> <memory>...
/// ```
///
/// Every memory state needs one `actions` line and every
/// (memory, observation, action) triple one `updates` line.  `#` starts
/// a comment.  The `deterministic` header must match the listed
/// supports.
pub fn parse_strategy(text: &str, p: &Pomdp) -> Result<FiniteMemoryStrategy, StrategyError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if !tokens.is_empty() {
            lines.push((i + 1, tokens));
        }
    }
    let err = |line: usize, msg: String| StrategyError::Parse { line, msg };
    let mut it = lines.into_iter();
    let mut header = |key: &str| -> Result<(usize, Vec<String>), StrategyError> {
        match it.next() {
            Some((no, toks)) if toks[0] == key => {
                Ok((no, toks[1..].iter().map(|t| t.to_string()).collect()))
            }
            Some((no, toks)) => Err(err(no, format!("expected `{key}`, found `{}`", toks[0]))),
            None => Err(err(0, format!("expected `{key}`, found end of input"))),
        }
    };
    let number = |key: &str, (no, toks): (usize, Vec<String>)| -> Result<usize, StrategyError> {
        match &toks[..] {
            [t] => t
                .parse()
                .map_err(|_| err(no, format!("invalid number `{t}` after `{key}`"))),
            _ => Err(err(no, format!("`{key}` takes exactly one number"))),
        }
    };
    let mu = number("mu:", header("mu:")?)?;
    let m0 = number("m0:", header("m0:")?)?;
    let (det_line, det_toks) = header("deterministic:")?;
    let declared_det = match det_toks.as_slice() {
        [t] if t == "true" => true,
        [t] if t == "false" => false,
        _ => {
            return Err(err(
                det_line,
                "`deterministic:` takes `true` or `false`".to_string(),
            ))
        }
    };
    if mu == 0 {
        return Err(err(det_line, "mu must be at least 1".to_string()));
    }

    let nz = p.num_observations();
    let na = p.num_actions();
    let mut actions: Vec<Option<BTreeSet<ActionId>>> = vec![None; mu];
    let mut updates: Vec<Vec<Vec<Option<BTreeSet<usize>>>>> =
        vec![vec![vec![None; na]; nz]; mu];
    let mem_index = |no: usize, tok: &str| -> Result<usize, StrategyError> {
        let m: usize = tok
            .parse()
            .map_err(|_| err(no, format!("invalid memory state `{tok}`")))?;
        if m >= mu {
            return Err(err(no, format!("memory state {m} out of range (mu = {mu})")));
        }
        Ok(m)
    };
    for (no, toks) in it {
        match toks[0] {
            "actions:" => {
                if toks.len() < 3 {
                    return Err(err(no, "`actions:` takes a memory state and at least one action".to_string()));
                }
                let m = mem_index(no, toks[1])?;
                if actions[m].is_some() {
                    return Err(err(no, format!("actions for memory state {m} given twice")));
                }
                let mut sup = BTreeSet::new();
                for t in &toks[2..] {
                    let a = p
                        .action_index(t)
                        .ok_or_else(|| err(no, format!("unknown action `{t}`")))?;
                    sup.insert(a);
                }
                actions[m] = Some(sup);
            }
            "updates:" => {
                if toks.len() < 5 {
                    return Err(err(
                        no,
                        "`updates:` takes memory, observation, action, and successor memories"
                            .to_string(),
                    ));
                }
                let m = mem_index(no, toks[1])?;
                let z = p
                    .obs_index(toks[2])
                    .ok_or_else(|| err(no, format!("unknown observation `{}`", toks[2])))?;
                let a = p
                    .action_index(toks[3])
                    .ok_or_else(|| err(no, format!("unknown action `{}`", toks[3])))?;
                if updates[m][z][a].is_some() {
                    return Err(err(
                        no,
                        format!("update for memory {m}, `{}`, `{}` given twice", toks[2], toks[3]),
                    ));
                }
                let mut sup = BTreeSet::new();
                for t in &toks[4..] {
                    sup.insert(mem_index(no, t)?);
                }
                updates[m][z][a] = Some(sup);
            }
            other => {
                return Err(err(
                    no,
                    format!("expected `actions:` or `updates:`, found `{other}`"),
                ))
            }
        }
    }
    let action_support: Vec<BTreeSet<ActionId>> = actions
        .into_iter()
        .enumerate()
        .map(|(m, s)| s.ok_or_else(|| err(0, format!("no actions line for memory state {m}"))))
        .collect::<Result<_, _>>()?;
    let mut update_support = vec![vec![vec![BTreeSet::new(); na]; nz]; mu];
    for (m, per_obs) in updates.into_iter().enumerate() {
        for (z, per_action) in per_obs.into_iter().enumerate() {
            for (a, sup) in per_action.into_iter().enumerate() {
                update_support[m][z][a] = sup.ok_or_else(|| {
                    err(
                        0,
                        format!(
                            "no updates line for memory {m}, `{}`, `{}`",
                            p.obs_name(z),
                            p.action_name(a)
                        ),
                    )
                })?;
            }
        }
    }
    let strategy = FiniteMemoryStrategy::new(m0, action_support, update_support)?;
    if strategy.is_deterministic() != declared_det {
        return Err(err(
            det_line,
            format!(
                "deterministic flag says {declared_det} but supports say {}",
                strategy.is_deterministic()
            ),
        ));
    }
    Ok(strategy)
}

/// The finite graph of (state, memory) pairs induced by playing a
/// strategy.  Node (s,m) steps to (s',m') when some supported action can
/// move s to s' and the memory update on s' 's observation allows m'.
#[derive(Debug)]
pub struct ProductGraph {
    mu: usize,
    edges: Vec<Vec<usize>>,
    reachable: Vec<bool>,
    goal_state: StateId,
    initial_node: usize,
}

impl ProductGraph {
    pub fn node(&self, state: StateId, mem: usize) -> usize {
        state * self.mu + mem
    }

    pub fn state_mem(&self, node: usize) -> (StateId, usize) {
        (node / self.mu, node % self.mu)
    }

    pub fn num_nodes(&self) -> usize {
        self.edges.len()
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.edges[node]
    }

    pub fn is_reachable(&self, state: StateId, mem: usize) -> bool {
        self.reachable[self.node(state, mem)]
    }

    pub fn initial_node(&self) -> usize {
        self.initial_node
    }

    /// Reachable (state, memory) pairs in node order.
    pub fn reachable_nodes(&self) -> impl Iterator<Item = (StateId, usize)> + '_ {
        self.reachable
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(|(n, _)| self.state_mem(n))
    }

    fn goal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.mu).map(move |m| self.goal_state * self.mu + m)
    }
}

pub fn build_product_graph(
    p: &Pomdp,
    s: &FiniteMemoryStrategy,
) -> Result<ProductGraph, StrategyError> {
    s.check_shape(p)?;
    let mu = s.mu();
    let n = p.num_states() * mu;
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for state in 0..p.num_states() {
        for mem in 0..mu {
            let out = &mut edges[state * mu + mem];
            for &a in s.action_support(mem) {
                for succ in p.support_successors(state, a) {
                    for &mem2 in s.update_support(mem, p.obs_of(succ), a) {
                        out.push(succ * mu + mem2);
                    }
                }
            }
            out.sort_unstable();
            out.dedup();
        }
    }
    let initial_node = p.initial() * mu + s.m0();
    let mut reachable = vec![false; n];
    let mut stack = vec![initial_node];
    reachable[initial_node] = true;
    while let Some(u) = stack.pop() {
        for &v in &edges[u] {
            if !reachable[v] {
                reachable[v] = true;
                stack.push(v);
            }
        }
    }
    Ok(ProductGraph {
        mu,
        edges,
        reachable,
        goal_state: p.goal(),
        initial_node,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    AlmostSure,
    /// A reachable product node with no path to the goal.  Among all
    /// failing nodes this is the smallest by (state name, memory index),
    /// so reports are stable.
    Counterexample { state: StateId, mem: usize },
}

/// Decides whether the strategy reaches the goal with probability one:
/// true exactly when every reachable node of the product graph has a
/// path to the goal.  Only transition supports enter the check, so the
/// answer is invariant under re-weighting of probabilities.
pub fn verify_almost_sure(
    p: &Pomdp,
    s: &FiniteMemoryStrategy,
) -> Result<VerifyOutcome, StrategyError> {
    let g = build_product_graph(p, s)?;
    let n = g.num_nodes();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        for &v in g.successors(u) {
            rev[v].push(u);
        }
    }
    let mut can_reach = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for gn in g.goal_nodes() {
        can_reach[gn] = true;
        stack.push(gn);
    }
    while let Some(u) = stack.pop() {
        for &v in &rev[u] {
            if !can_reach[v] {
                can_reach[v] = true;
                stack.push(v);
            }
        }
    }
    let mut worst: Option<(StateId, usize)> = None;
    for (state, mem) in g.reachable_nodes() {
        if can_reach[g.node(state, mem)] {
            continue;
        }
        let better = match worst {
            None => true,
            Some((ws, wm)) => {
                (p.state_name(state), mem) < (p.state_name(ws), wm)
            }
        };
        if better {
            worst = Some((state, mem));
        }
    }
    Ok(match worst {
        None => VerifyOutcome::AlmostSure,
        Some((state, mem)) => VerifyOutcome::Counterexample { state, mem },
    })
}

fn read_var(
    map: &VarMap,
    model: &[bool],
    key: VarKey,
) -> Result<bool, StrategyError> {
    let var = map
        .lookup(&key)
        .ok_or_else(|| StrategyError::Extraction(format!("variable `{key}` not in the map")))?;
    model
        .get(var as usize)
        .copied()
        .ok_or_else(|| StrategyError::Extraction(format!("model too short for variable {var}")))
}

/// Turns per-observation-class action supports into a strategy: a
/// single-memory constant strategy when all classes agree, otherwise an
/// observation-tracking strategy with one memory state per observation.
/// Entries for observations labeling no state are taken as given.
fn obs_dependent_strategy(
    p: &Pomdp,
    supports: &[BTreeSet<ActionId>],
) -> Result<FiniteMemoryStrategy, StrategyError> {
    let classes = p.observation_classes();
    let nonempty: Vec<ObsId> = (0..classes.len())
        .filter(|&z| !classes[z].is_empty())
        .collect();
    let first = &supports[nonempty[0]];
    if nonempty.iter().all(|&z| &supports[z] == first) {
        return FiniteMemoryStrategy::constant(
            first.clone(),
            p.num_observations(),
            p.num_actions(),
        );
    }
    let nz = p.num_observations();
    let na = p.num_actions();
    let mut update = vec![vec![vec![BTreeSet::new(); na]; nz]; nz];
    for per_obs in update.iter_mut() {
        for (z, per_action) in per_obs.iter_mut().enumerate() {
            for sup in per_action.iter_mut() {
                sup.insert(z);
            }
        }
    }
    FiniteMemoryStrategy::new(p.obs_of(p.initial()), supports.to_vec(), update)
}

/// Reads a memoryless strategy out of a SAT model over per-state action
/// variables.  All states of an observation class must agree on every
/// action (the encoding forces this; disagreement means the model and
/// map do not belong together).
pub fn extract_memoryless(
    p: &Pomdp,
    map: &VarMap,
    model: &[bool],
) -> Result<FiniteMemoryStrategy, StrategyError> {
    let classes = p.observation_classes();
    let mut supports: Vec<BTreeSet<ActionId>> = Vec::with_capacity(classes.len());
    for (z, class) in classes.iter().enumerate() {
        let mut sup = BTreeSet::new();
        match class.first() {
            None => {
                sup.insert(0);
            }
            Some(&rep) => {
                for a in 0..p.num_actions() {
                    let val = read_var(map, model, VarKey::ActionAt { state: rep, action: a })?;
                    for &s in &class[1..] {
                        let other =
                            read_var(map, model, VarKey::ActionAt { state: s, action: a })?;
                        if other != val {
                            return Err(StrategyError::Extraction(format!(
                                "observation class `{}` disagrees on action `{}`",
                                p.obs_name(z),
                                p.action_name(a)
                            )));
                        }
                    }
                    if val {
                        sup.insert(a);
                    }
                }
                if sup.is_empty() {
                    return Err(StrategyError::Extraction(format!(
                        "empty action support for observation class `{}`",
                        p.obs_name(z)
                    )));
                }
            }
        }
        supports.push(sup);
    }
    obs_dependent_strategy(p, &supports)
}

/// Reads a `mu`-memory strategy out of a SAT model over memory-indexed
/// action and update variables.
pub fn extract_small_memory(
    p: &Pomdp,
    mu: usize,
    m0: usize,
    map: &VarMap,
    model: &[bool],
) -> Result<FiniteMemoryStrategy, StrategyError> {
    let nz = p.num_observations();
    let na = p.num_actions();
    let mut action_support = Vec::with_capacity(mu);
    for mem in 0..mu {
        let mut sup = BTreeSet::new();
        for a in 0..na {
            if read_var(map, model, VarKey::ActionIn { mem, action: a })? {
                sup.insert(a);
            }
        }
        if sup.is_empty() {
            return Err(StrategyError::Extraction(format!(
                "empty action support for memory state {mem}"
            )));
        }
        action_support.push(sup);
    }
    let mut update_support = vec![vec![vec![BTreeSet::new(); na]; nz]; mu];
    for mem in 0..mu {
        for obs in 0..nz {
            for a in 0..na {
                let sup = &mut update_support[mem][obs][a];
                for mem2 in 0..mu {
                    let key = VarKey::Update {
                        mem,
                        obs,
                        action: a,
                        next_mem: mem2,
                    };
                    if read_var(map, model, key)? {
                        sup.insert(mem2);
                    }
                }
                if sup.is_empty() {
                    return Err(StrategyError::Extraction(format!(
                        "empty memory update for memory {mem}, observation `{}`, action `{}`",
                        p.obs_name(obs),
                        p.action_name(a)
                    )));
                }
            }
        }
    }
    FiniteMemoryStrategy::new(m0, action_support, update_support)
}

/// Which space [`brute_force_exists`] searches.  `Memoryless` means one
/// action support per observation class (stationary in the observation);
/// `SmallMemory` means `mu` memory states updated on observations.  The
/// two are incomparable in general: a single memory state cannot react
/// to observations, while a memoryless strategy cannot remember them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyClass {
    Memoryless,
    SmallMemory { mu: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("enumeration budget of {cap} exceeded")]
    CapExceeded { cap: u64 },
    #[error("memory count must be at least 1")]
    BadMemoryCount,
}

/// Exhaustively decides whether a winning strategy of the given class
/// exists, by enumeration plus verification.  Returns the first witness
/// found, which [`verify_almost_sure`] accepts by construction.  `cap`
/// bounds the number of enumeration steps (candidates for the
/// memoryless class, search-tree nodes for the small-memory class).
pub fn brute_force_exists(
    p: &Pomdp,
    class: StrategyClass,
    cap: u64,
) -> Result<Option<FiniteMemoryStrategy>, OracleError> {
    match class {
        StrategyClass::Memoryless => memoryless_search(p, cap),
        StrategyClass::SmallMemory { mu } => {
            if mu == 0 {
                return Err(OracleError::BadMemoryCount);
            }
            small_memory_search(p, mu, cap)
        }
    }
}

fn bits(mask: u32) -> impl Iterator<Item = usize> {
    (0..u32::BITS as usize).filter(move |i| mask >> i & 1 == 1)
}

/// Does playing `masks[observation class]` win?  Forward closure over
/// states, then backward reachability of the goal.
fn class_choice_wins(p: &Pomdp, masks: &[u32]) -> bool {
    let ns = p.num_states();
    let mut reach = vec![false; ns];
    let mut stack = vec![p.initial()];
    reach[p.initial()] = true;
    while let Some(s) = stack.pop() {
        for a in bits(masks[p.obs_of(s)]) {
            for t in p.support_successors(s, a) {
                if !reach[t] {
                    reach[t] = true;
                    stack.push(t);
                }
            }
        }
    }
    let mut can = vec![false; ns];
    can[p.goal()] = true;
    loop {
        let mut changed = false;
        for s in 0..ns {
            if can[s] {
                continue;
            }
            let escapes = bits(masks[p.obs_of(s)])
                .any(|a| p.support_successors(s, a).any(|t| can[t]));
            if escapes {
                can[s] = true;
                changed = true;
            }
        }
        if !changed {
            return (0..ns).all(|s| !reach[s] || can[s]);
        }
    }
}

/// Enumerates one action support per observation class, in ascending
/// bitmask order with the last class stepping fastest.
fn memoryless_search(
    p: &Pomdp,
    cap: u64,
) -> Result<Option<FiniteMemoryStrategy>, OracleError> {
    let classes = p.observation_classes();
    let nz = classes.len();
    let na = p.num_actions();
    let full = (1u32 << na) - 1;
    let enumerated: Vec<ObsId> = (0..nz).filter(|&z| !classes[z].is_empty()).collect();
    let mut masks = vec![1u32; nz];
    let mut visited = 0u64;
    loop {
        visited += 1;
        if visited > cap {
            return Err(OracleError::CapExceeded { cap });
        }
        if class_choice_wins(p, &masks) {
            let supports: Vec<BTreeSet<ActionId>> = masks
                .iter()
                .map(|&m| bits(m).collect::<BTreeSet<ActionId>>())
                .collect();
            let witness = obs_dependent_strategy(p, &supports)
                .expect("winning class supports always form a strategy");
            assert_eq!(
                verify_almost_sure(p, &witness),
                Ok(VerifyOutcome::AlmostSure),
                "enumeration and verifier disagree"
            );
            return Ok(Some(witness));
        }
        // Odometer step over the enumerated classes.
        let mut i = enumerated.len();
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            masks[enumerated[i]] += 1;
            if masks[enumerated[i]] <= full {
                break;
            }
            masks[enumerated[i]] = 1;
        }
    }
}

/// Search state for the small-memory enumeration: action supports per
/// memory state are fixed by the caller; memory-update contexts are
/// assigned lazily, only once the play can actually query them.
struct MemorySearch<'a> {
    p: &'a Pomdp,
    mu: usize,
    /// Action support bitmask per memory state.
    sn: Vec<u32>,
    /// Update bitmask per context (memory, observation, action); 0 means
    /// not yet assigned.
    assign: Vec<u32>,
    visited: u64,
    cap: u64,
}

impl<'a> MemorySearch<'a> {
    fn ctx(&self, mem: usize, obs: ObsId, action: ActionId) -> usize {
        (mem * self.p.num_observations() + obs) * self.p.num_actions() + action
    }

    /// Product edges under a context interpretation.
    fn edges(&self, interpret: impl Fn(u32) -> u32) -> Vec<Vec<usize>> {
        let n = self.p.num_states() * self.mu;
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..self.p.num_states() {
            for m in 0..self.mu {
                let out = &mut edges[s * self.mu + m];
                for a in bits(self.sn[m]) {
                    for t in self.p.support_successors(s, a) {
                        let mask = interpret(self.assign[self.ctx(m, self.p.obs_of(t), a)]);
                        for m2 in bits(mask) {
                            out.push(t * self.mu + m2);
                        }
                    }
                }
                out.sort_unstable();
                out.dedup();
            }
        }
        edges
    }

    fn forward(&self, edges: &[Vec<usize>]) -> Vec<bool> {
        let start = self.p.initial() * self.mu;
        let mut reach = vec![false; edges.len()];
        reach[start] = true;
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &edges[u] {
                if !reach[v] {
                    reach[v] = true;
                    stack.push(v);
                }
            }
        }
        reach
    }

    fn all_reach_goal(&self, edges: &[Vec<usize>], reach: &[bool]) -> bool {
        let n = edges.len();
        let mut can = vec![false; n];
        for m in 0..self.mu {
            can[self.p.goal() * self.mu + m] = true;
        }
        loop {
            let mut changed = false;
            for u in 0..n {
                if !can[u] && edges[u].iter().any(|&v| can[v]) {
                    can[u] = true;
                    changed = true;
                }
            }
            if !changed {
                return (0..n).all(|u| !reach[u] || can[u]);
            }
        }
    }

    /// First context the reached part of the play queries but the
    /// assignment leaves open.
    fn open_context(&self, reach: &[bool]) -> Option<usize> {
        let mut queried = vec![false; self.assign.len()];
        for s in 0..self.p.num_states() {
            for m in 0..self.mu {
                if !reach[s * self.mu + m] {
                    continue;
                }
                for a in bits(self.sn[m]) {
                    for t in self.p.support_successors(s, a) {
                        queried[self.ctx(m, self.p.obs_of(t), a)] = true;
                    }
                }
            }
        }
        (0..self.assign.len()).find(|&c| queried[c] && self.assign[c] == 0)
    }

    /// Depth-first search over open contexts.  Prunes a branch as soon
    /// as some already-reached node cannot reach the goal even when all
    /// open contexts are read as full support; once no context is open,
    /// that optimistic check is exact, so passing it means winning.
    fn dfs(&mut self) -> Result<Option<Vec<u32>>, OracleError> {
        self.visited += 1;
        if self.visited > self.cap {
            return Err(OracleError::CapExceeded { cap: self.cap });
        }
        let committed = self.edges(|mask| mask);
        let reach = self.forward(&committed);
        let full = (1u32 << self.mu) - 1;
        let optimistic = self.edges(|mask| if mask == 0 { full } else { mask });
        if !self.all_reach_goal(&optimistic, &reach) {
            return Ok(None);
        }
        let Some(ctx) = self.open_context(&reach) else {
            return Ok(Some(self.assign.clone()));
        };
        for mask in 1..=full {
            self.assign[ctx] = mask;
            if let Some(win) = self.dfs()? {
                self.assign[ctx] = 0;
                return Ok(Some(win));
            }
        }
        self.assign[ctx] = 0;
        Ok(None)
    }
}

fn small_memory_search(
    p: &Pomdp,
    mu: usize,
    cap: u64,
) -> Result<Option<FiniteMemoryStrategy>, OracleError> {
    let na = p.num_actions();
    let full_actions = (1u32 << na) - 1;
    let nctx = mu * p.num_observations() * na;
    let mut search = MemorySearch {
        p,
        mu,
        sn: vec![1; mu],
        assign: vec![0; nctx],
        visited: 0,
        cap,
    };
    loop {
        if let Some(assign) = search.dfs()? {
            let action_support: Vec<BTreeSet<ActionId>> =
                search.sn.iter().map(|&m| bits(m).collect()).collect();
            let mut update_support =
                vec![vec![vec![BTreeSet::new(); na]; p.num_observations()]; mu];
            for m in 0..mu {
                for z in 0..p.num_observations() {
                    for a in 0..na {
                        let mask = assign[search.ctx(m, z, a)];
                        let sup: BTreeSet<usize> = if mask == 0 {
                            // Never queried by the play; any choice works.
                            [0].into()
                        } else {
                            bits(mask).collect()
                        };
                        update_support[m][z][a] = sup;
                    }
                }
            }
            let witness = FiniteMemoryStrategy::new(0, action_support, update_support)
                .expect("search assignments always form a strategy");
            assert_eq!(
                verify_almost_sure(p, &witness),
                Ok(VerifyOutcome::AlmostSure),
                "enumeration and verifier disagree"
            );
            return Ok(Some(witness));
        }
        // Next combination of action supports, last memory state fastest.
        let mut i = mu;
        loop {
            if i == 0 {
                return Ok(None);
            }
            i -= 1;
            search.sn[i] += 1;
            if search.sn[i] <= full_actions {
                break;
            }
            search.sn[i] = 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::CnfFormula;
    use crate::fixtures;
    use crate::pomdp::parse_pomdp;

    fn always_a() -> FiniteMemoryStrategy {
        parse_strategy(fixtures::M3_ALWAYS_A, &fixtures::m3()).unwrap()
    }

    fn always_b() -> FiniteMemoryStrategy {
        parse_strategy(fixtures::M3_ALWAYS_B, &fixtures::m3()).unwrap()
    }

    #[test]
    fn constructor_validates() {
        let single: BTreeSet<usize> = [0].into();
        assert_eq!(
            FiniteMemoryStrategy::new(0, vec![], vec![]),
            Err(StrategyError::NoMemory)
        );
        assert_eq!(
            FiniteMemoryStrategy::new(
                2,
                vec![single.clone()],
                vec![vec![vec![single.clone()]]]
            ),
            Err(StrategyError::BadInitialMemory { m0: 2, mu: 1 })
        );
        assert_eq!(
            FiniteMemoryStrategy::new(
                0,
                vec![BTreeSet::new()],
                vec![vec![vec![single.clone()]]]
            ),
            Err(StrategyError::EmptyActionSupport { mem: 0 })
        );
        assert_eq!(
            FiniteMemoryStrategy::new(
                0,
                vec![single.clone()],
                vec![vec![vec![BTreeSet::new()]]]
            ),
            Err(StrategyError::EmptyUpdate {
                mem: 0,
                obs: 0,
                action: 0
            })
        );
        let good = FiniteMemoryStrategy::new(
            0,
            vec![single.clone()],
            vec![vec![vec![single.clone()]]],
        )
        .unwrap();
        assert!(good.is_deterministic());
        let both: BTreeSet<usize> = [0, 1].into();
        let two = FiniteMemoryStrategy::new(
            0,
            vec![both.clone(), single.clone()],
            vec![
                vec![vec![both.clone(), single.clone()]],
                vec![vec![single.clone(), single.clone()]],
            ],
        )
        .unwrap();
        assert!(!two.is_deterministic());
        assert_eq!(two.mu(), 2);
    }

    #[test]
    fn serialization_matches_fixture_text() {
        let p = fixtures::m3();
        assert_eq!(write_strategy(&always_a(), &p).unwrap(), fixtures::M3_ALWAYS_A);
        assert_eq!(write_strategy(&always_b(), &p).unwrap(), fixtures::M3_ALWAYS_B);
    }

    #[test]
    fn serialization_round_trips_nondeterministic_strategies() {
        let p = fixtures::m3();
        let both: BTreeSet<usize> = [0, 1].into();
        let one: BTreeSet<usize> = [1].into();
        let zero: BTreeSet<usize> = [0].into();
        let mut update = vec![vec![vec![zero.clone(); 2]; 4]; 2];
        update[0][1][0] = both.clone();
        update[1][2][1] = one.clone();
        let s = FiniteMemoryStrategy::new(1, vec![both.clone(), one.clone()], update).unwrap();
        let text = write_strategy(&s, &p).unwrap();
        assert_eq!(parse_strategy(&text, &p).unwrap(), s);
    }

    #[test]
    fn parse_rejects_malformed_strategies() {
        let p = fixtures::m3();
        let cases: &[(&str, &str)] = &[
            ("m0: 0\n", "expected `mu:`"),
            ("mu: 1\nm0: 0\ndeterministic: yes\n", "takes `true` or `false`"),
            ("mu: 0\nm0: 0\ndeterministic: true\n", "mu must be at least 1"),
            (
                "mu: 1\nm0: 3\ndeterministic: true\nactions: 0 a\n",
                "no updates line",
            ),
            (
                "mu: 1\nm0: 0\ndeterministic: true\nactions: 0 c\n",
                "unknown action `c`",
            ),
            (
                "mu: 1\nm0: 0\ndeterministic: true\nactions: 0 a\nactions: 0 b\n",
                "given twice",
            ),
            (
                "mu: 1\nm0: 0\ndeterministic: true\nupdates: 0 zs a 0\n",
                "no actions line",
            ),
        ];
        for (text, needle) in cases {
            let err = parse_strategy(text, &p).unwrap_err().to_string();
            assert!(
                err.contains(needle),
                "`{text}` should fail with `{needle}`, got `{err}`"
            );
        }
        // Wrong deterministic flag.
        let lying = fixtures::M3_ALWAYS_A.replace("deterministic: true", "deterministic: false");
        let err = parse_strategy(&lying, &p).unwrap_err().to_string();
        assert!(err.contains("deterministic flag"), "got `{err}`");
        // Out-of-range initial memory reaches the constructor check.
        let bad_m0 = fixtures::M3_ALWAYS_A.replace("m0: 0", "m0: 1");
        assert_eq!(
            parse_strategy(&bad_m0, &p),
            Err(StrategyError::BadInitialMemory { m0: 1, mu: 1 })
        );
    }

    #[test]
    fn product_reachability_on_m3() {
        let p = fixtures::m3();
        let g = build_product_graph(&p, &always_b()).unwrap();
        let reached: Vec<(usize, usize)> = g.reachable_nodes().collect();
        let s0 = p.state_index("s0").unwrap();
        let u = p.state_index("U").unwrap();
        assert_eq!(reached, vec![(s0, 0), (u, 0)]);

        let g = build_product_graph(&p, &always_a()).unwrap();
        assert!(g.is_reachable(p.goal(), 0));
        assert_eq!(g.reachable_nodes().count(), 4);
    }

    #[test]
    fn product_reachability_on_m2_full_support() {
        let p = fixtures::m2();
        let s = FiniteMemoryStrategy::constant([0].into(), 3, 1).unwrap();
        let g = build_product_graph(&p, &s).unwrap();
        assert_eq!(g.reachable_nodes().count(), 3);
    }

    #[test]
    fn verifier_accepts_and_rejects_the_reference_strategies() {
        let p = fixtures::m3();
        assert_eq!(
            verify_almost_sure(&p, &always_a()),
            Ok(VerifyOutcome::AlmostSure)
        );
        let u = p.state_index("U").unwrap();
        assert_eq!(
            verify_almost_sure(&p, &always_b()),
            Ok(VerifyOutcome::Counterexample { state: u, mem: 0 })
        );
    }

    #[test]
    fn verifier_blames_the_losing_sink_on_m2() {
        let p = fixtures::m2();
        let s = FiniteMemoryStrategy::constant([0].into(), 3, 1).unwrap();
        let l = p.state_index("L").unwrap();
        assert_eq!(
            verify_almost_sure(&p, &s),
            Ok(VerifyOutcome::Counterexample { state: l, mem: 0 })
        );
    }

    #[test]
    fn verifier_is_trivial_on_m1() {
        let p = fixtures::m1();
        let s = FiniteMemoryStrategy::constant([0].into(), 2, 1).unwrap();
        assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
    }

    #[test]
    fn verdict_survives_reweighting() {
        let text = fixtures::M3
            .replace("trans: V a U 0.3333333333333333", "trans: V a U 0.5")
            .replace("trans: V a s0 0.3333333333333333", "trans: V a s0 0.25")
            .replace("trans: V a G 0.3333333333333333", "trans: V a G 0.25");
        let p = parse_pomdp(&text).unwrap();
        assert_eq!(
            verify_almost_sure(&p, &parse_strategy(fixtures::M3_ALWAYS_A, &p).unwrap()),
            Ok(VerifyOutcome::AlmostSure)
        );
    }

    /// Model and map for extraction tests: one action variable per
    /// (state, action) of M3, set according to `chosen`.
    fn memoryless_model(
        p: &Pomdp,
        chosen: impl Fn(StateId) -> Vec<ActionId>,
    ) -> (VarMap, Vec<bool>) {
        let mut f = CnfFormula::new();
        let mut map = VarMap::new();
        let mut model = vec![false];
        for s in 0..p.num_states() {
            let sup = chosen(s);
            for a in 0..p.num_actions() {
                map.fresh_var(&mut f, VarKey::ActionAt { state: s, action: a })
                    .unwrap();
                model.push(sup.contains(&a));
            }
        }
        (map, model)
    }

    #[test]
    fn memoryless_extraction_collapses_to_the_fixture_strategy() {
        let p = fixtures::m3();
        let (map, model) = memoryless_model(&p, |_| vec![0]);
        let s = extract_memoryless(&p, &map, &model).unwrap();
        assert_eq!(s, always_a());
        assert_eq!(s.mu(), 1);
    }

    #[test]
    fn memoryless_extraction_tracks_observations_when_classes_differ() {
        let p = fixtures::m3();
        let per_state = |s: StateId| match p.state_name(s) {
            "s0" => vec![0],
            "V" => vec![1],
            "U" => vec![0, 1],
            _ => vec![0],
        };
        let (map, model) = memoryless_model(&p, per_state);
        let s = extract_memoryless(&p, &map, &model).unwrap();
        assert_eq!(s.mu(), 4, "one memory state per observation");
        assert_eq!(s.m0(), p.obs_of(p.initial()));
        let zv = p.obs_index("zv").unwrap();
        let zu = p.obs_index("zu").unwrap();
        assert_eq!(s.action_support(zv), &BTreeSet::from([1]));
        assert_eq!(s.action_support(zu), &BTreeSet::from([0, 1]));
        // The memory tracks the observation just seen.
        for m in 0..4 {
            for z in 0..4 {
                for a in 0..2 {
                    assert_eq!(s.update_support(m, z, a), &BTreeSet::from([z]));
                }
            }
        }
    }

    #[test]
    fn memoryless_extraction_rejects_class_disagreement() {
        let text = "\
states: x y G
actions: a
observations: shared zg
init: x
goal: G
obs: x shared
obs: y shared
obs: G zg
trans: x a y 1.0
trans: y a G 1.0
trans: G a G 1.0
";
        let p = parse_pomdp(text).unwrap();
        let (map, model) = memoryless_model(&p, |s| if s == 0 { vec![0] } else { vec![] });
        let err = extract_memoryless(&p, &map, &model).unwrap_err();
        assert!(err.to_string().contains("disagrees"), "got {err}");
    }

    #[test]
    fn small_memory_extraction_reads_the_grid() {
        let p = fixtures::m1();
        let mu = 2;
        let mut f = CnfFormula::new();
        let mut map = VarMap::new();
        let mut model = vec![false];
        for mem in 0..mu {
            for action in 0..p.num_actions() {
                map.fresh_var(&mut f, VarKey::ActionIn { mem, action }).unwrap();
                model.push(true);
            }
        }
        for mem in 0..mu {
            for obs in 0..p.num_observations() {
                for action in 0..p.num_actions() {
                    for next_mem in 0..mu {
                        map.fresh_var(
                            &mut f,
                            VarKey::Update { mem, obs, action, next_mem },
                        )
                        .unwrap();
                        // Memory flips on every step.
                        model.push(next_mem != mem);
                    }
                }
            }
        }
        let s = extract_small_memory(&p, mu, 0, &map, &model).unwrap();
        assert_eq!(s.mu(), 2);
        assert!(!s.is_deterministic() || p.num_actions() == 1);
        assert_eq!(s.update_support(0, 1, 0), &BTreeSet::from([1]));
        assert_eq!(s.update_support(1, 0, 0), &BTreeSet::from([0]));
        assert_eq!(
            verify_almost_sure(&p, &s),
            Ok(VerifyOutcome::AlmostSure)
        );
    }

    #[test]
    fn oracle_on_the_three_reference_models() {
        let m1 = fixtures::m1();
        let w = brute_force_exists(&m1, StrategyClass::Memoryless, 1000)
            .unwrap()
            .expect("single action wins");
        assert_eq!(w.mu(), 1);

        let m2 = fixtures::m2();
        assert_eq!(brute_force_exists(&m2, StrategyClass::Memoryless, 1000), Ok(None));
        assert_eq!(
            brute_force_exists(&m2, StrategyClass::SmallMemory { mu: 2 }, 100_000),
            Ok(None)
        );

        let m3 = fixtures::m3();
        let w = brute_force_exists(&m3, StrategyClass::Memoryless, 100_000)
            .unwrap()
            .expect("playing a at s0 wins");
        assert_eq!(verify_almost_sure(&m3, &w), Ok(VerifyOutcome::AlmostSure));
        assert!(brute_force_exists(&m3, StrategyClass::SmallMemory { mu: 1 }, 100_000)
            .unwrap()
            .is_some());
    }

    #[test]
    fn observation_reaction_and_memory_are_different_powers() {
        let p = fixtures::forked();
        let memoryless = brute_force_exists(&p, StrategyClass::Memoryless, 100_000)
            .unwrap()
            .expect("reacting to the room observation wins");
        assert!(memoryless.mu() > 1, "distinct class supports cannot collapse");
        assert_eq!(
            brute_force_exists(&p, StrategyClass::SmallMemory { mu: 1 }, 100_000),
            Ok(None),
        );
        let two = brute_force_exists(&p, StrategyClass::SmallMemory { mu: 2 }, 1_000_000)
            .unwrap()
            .expect("two memory states track the room");
        assert_eq!(verify_almost_sure(&p, &two), Ok(VerifyOutcome::AlmostSure));
    }

    #[test]
    fn oracle_reports_exhausted_budget() {
        let p = fixtures::m3();
        assert_eq!(
            brute_force_exists(&p, StrategyClass::SmallMemory { mu: 2 }, 2),
            Err(OracleError::CapExceeded { cap: 2 })
        );
        assert_eq!(
            brute_force_exists(&p, StrategyClass::Memoryless, 0),
            Err(OracleError::CapExceeded { cap: 0 })
        );
    }
}
