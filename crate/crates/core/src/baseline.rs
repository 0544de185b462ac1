//! Explicit belief-support construction, the classical reference
//! algorithm for general strategies.
//!
//! A belief support is the set of states the play could currently be
//! in.  Stepping a support with an action and splitting the result by
//! observation gives a perfect-information MDP over supports; the model
//! is almost-surely winnable by *some* strategy (arbitrary memory) iff
//! the initial support wins almost-sure reachability there.  Node count
//! is worst-case exponential in the state count, which is the point:
//! this is the expensive construction the SAT route avoids.
//!
//! The target test is membership of the singleton goal support, which is
//! only adequate when the goal is absorbing and alone in its observation
//! class.  Models where the goal shares its observation are therefore
//! re-normalized internally (a fresh dedicated goal is appended) before
//! building; the decision is unaffected.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::pomdp::{Pomdp, StateId};

/// Default bound on constructed belief-support nodes.
pub const DEFAULT_NODE_CAP: usize = 1 << 22;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("belief-support construction exceeded {cap} nodes")]
    NodeCapExceeded { cap: usize },
}

/// The forward-reachable fragment of the belief-support MDP.  Nodes are
/// observation-consistent, non-empty, sorted state sets; node 0 is the
/// initial singleton.
#[derive(Debug)]
pub struct BeliefSupportMdp {
    nodes: Vec<Vec<StateId>>,
    /// `succs[node][action]`: successor node ids, the observation
    /// partition of the action's post set.  Sorted and deduplicated.
    succs: Vec<Vec<Vec<usize>>>,
    target: Option<usize>,
    state_names: Vec<String>,
    action_names: Vec<String>,
}

impl BeliefSupportMdp {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: usize) -> &[StateId] {
        &self.nodes[id]
    }

    pub fn initial_node(&self) -> usize {
        0
    }

    /// The singleton goal support, when it is reachable at all.
    pub fn target_node(&self) -> Option<usize> {
        self.target
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn successor_nodes(&self, node: usize, action: usize) -> &[usize] {
        &self.succs[node][action]
    }
}

/// Builds the reachable belief-support MDP, re-normalizing the goal
/// first if its observation is shared.  Fails once more than `node_cap`
/// distinct supports appear.
pub fn build_belief_support(
    p: &Pomdp,
    node_cap: usize,
) -> Result<BeliefSupportMdp, BaselineError> {
    if p.goal_obs_dedicated() {
        return build_inner(p, node_cap);
    }
    let q = p
        .to_raw()
        .normalize_goal()
        .expect("a valid model stays valid under goal normalization");
    build_inner(&q, node_cap)
}

fn build_inner(p: &Pomdp, node_cap: usize) -> Result<BeliefSupportMdp, BaselineError> {
    let na = p.num_actions();
    let mut index: HashMap<Vec<StateId>, usize> = HashMap::new();
    let mut nodes: Vec<Vec<StateId>> = Vec::new();
    let mut succs: Vec<Vec<Vec<usize>>> = Vec::new();

    let mut intern = |support: Vec<StateId>,
                      nodes: &mut Vec<Vec<StateId>>|
     -> Result<usize, BaselineError> {
        if let Some(&id) = index.get(&support) {
            return Ok(id);
        }
        if nodes.len() >= node_cap {
            return Err(BaselineError::NodeCapExceeded { cap: node_cap });
        }
        let id = nodes.len();
        index.insert(support.clone(), id);
        nodes.push(support);
        Ok(id)
    };

    intern(vec![p.initial()], &mut nodes)?;
    let mut next = 0;
    while next < nodes.len() {
        let support = nodes[next].clone();
        let mut per_action = Vec::with_capacity(na);
        for a in 0..na {
            // Partition the post set by observation; BTreeMap keeps the
            // split deterministic.
            let mut by_obs: BTreeMap<usize, Vec<StateId>> = BTreeMap::new();
            for &s in &support {
                for t in p.support_successors(s, a) {
                    by_obs.entry(p.obs_of(t)).or_default().push(t);
                }
            }
            let mut ids = Vec::with_capacity(by_obs.len());
            for (_, mut states) in by_obs {
                states.sort_unstable();
                states.dedup();
                ids.push(intern(states, &mut nodes)?);
            }
            ids.sort_unstable();
            ids.dedup();
            per_action.push(ids);
        }
        succs.push(per_action);
        next += 1;
    }

    let target = index.get(&vec![p.goal()]).copied();
    Ok(BeliefSupportMdp {
        nodes,
        succs,
        target,
        state_names: p.state_names().to_vec(),
        action_names: p.action_names().to_vec(),
    })
}

/// Almost-sure reachability of the target node on the support MDP, by
/// the standard pruning fixpoint: repeatedly restrict to nodes that can
/// still reach the target and drop actions that may leave that set,
/// until stable.  Returns the winning flag per node.
pub fn mdp_almost_sure_reach(m: &BeliefSupportMdp) -> Vec<bool> {
    let n = m.num_nodes();
    let Some(target) = m.target else {
        return vec![false; n];
    };
    let na = m.num_actions();
    let mut alive = vec![true; n];
    let mut enabled = vec![vec![true; na]; n];
    let mut outer = 0;
    loop {
        outer += 1;
        debug_assert!(outer <= 2 * n + 2, "fixpoint failed to settle");
        // (i) Which alive nodes can still reach the target?
        let mut can = vec![false; n];
        can[target] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for u in 0..n {
                if !alive[u] || can[u] {
                    continue;
                }
                let reaches = (0..na).any(|a| {
                    enabled[u][a]
                        && m.succs[u][a].iter().any(|&v| alive[v] && can[v])
                });
                if reaches {
                    can[u] = true;
                    changed = true;
                }
            }
        }
        // (ii) Drop actions that may leave the winning candidates, then
        // nodes with no action left.
        let mut pruned = false;
        for u in 0..n {
            if !alive[u] {
                continue;
            }
            for a in 0..na {
                if enabled[u][a]
                    && m.succs[u][a].iter().any(|&v| !alive[v] || !can[v])
                {
                    enabled[u][a] = false;
                    pruned = true;
                }
            }
            if alive[u] && (!can[u] || (0..na).all(|a| !enabled[u][a])) {
                alive[u] = false;
                pruned = true;
            }
        }
        if !pruned {
            return alive;
        }
    }
}

/// Does any strategy, with arbitrary memory, reach the goal almost
/// surely?  The belief-support reference decision.
pub fn baseline_winning(p: &Pomdp, node_cap: usize) -> Result<bool, BaselineError> {
    let m = build_belief_support(p, node_cap)?;
    let winning = mdp_almost_sure_reach(&m);
    Ok(winning[m.initial_node()])
}

/// Renders the support MDP in the line-oriented style of the model
/// format: one `node:` line per support (id then member state names),
/// `init:`/`target:` markers, and one `edge:` line per transition.
pub fn dump_belief_support(m: &BeliefSupportMdp) -> String {
    let mut out = String::new();
    for (id, support) in m.nodes.iter().enumerate() {
        let names: Vec<&str> = support
            .iter()
            .map(|&s| m.state_names[s].as_str())
            .collect();
        let _ = writeln!(out, "node: {id} {}", names.join(" "));
    }
    let _ = writeln!(out, "init: {}", m.initial_node());
    if let Some(t) = m.target {
        let _ = writeln!(out, "target: {t}");
    }
    for (id, per_action) in m.succs.iter().enumerate() {
        for (a, ids) in per_action.iter().enumerate() {
            for &v in ids {
                let _ = writeln!(out, "edge: {id} {} {v}", m.action_names[a]);
            }
        }
    }
    out
}
