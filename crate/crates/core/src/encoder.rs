//! Reduction from strategy existence to CNF satisfiability.
//!
//! Two encodings share one shape.  Action variables fix a strategy,
//! reach variables over-approximate the states the play can visit, and
//! path variables assert a goal-directed path of bounded length from
//! every visited state.  A satisfying assignment therefore is a strategy
//! whose every reachable configuration keeps the goal reachable, which
//! is exactly almost-sure reachability on the support level.
//!
//! The observation-stationary encoding works per state: `A(i,a)` picks
//! actions, equal-observation states are tied together, `C(i)` marks
//! visited states, and `P(i,j)` says state `i` has a compatible path of
//! at most `j` steps to the goal.  The memory-indexed encoding replaces
//! the state index of `A` by a memory state and adds update variables
//! `M(m,z,a,m')`; reach and path variables range over (state, memory)
//! pairs.  Memory updates read the observation of the move's *successor*
//! state.
//!
//! Two details keep the path recurrence honest.  Path variables at step
//! 0 are pinned false away from the goal, otherwise the biconditionals
//! admit circular "paths" that never arrive.  And known-constant path
//! literals (goal: true; step 0: false) are folded into the recurrence
//! before the Tseitin translation, which keeps the auxiliary variable
//! count down without changing satisfiability.
//!
//! Variables are allocated in fixed blocks (actions, reach, path, then
//! updates, then Tseitin auxiliaries) and clauses are emitted in a fixed
//! family order, so the same inputs always produce byte-identical
//! DIMACS.

use crate::cnf::{BoolExpr, CnfFormula, TseitinMode, VarKey, VarMap};
use crate::pomdp::Pomdp;

/// Knobs for [`encode`]: path bound `k`, memory size `mu`, and whether
/// the strategy must be deterministic.  `mu = 1` selects the
/// observation-stationary encoding, larger values the memory-indexed
/// one.  A bound of `k = |S|·mu` is always conclusive: a winning
/// strategy yields goal paths visiting each (state, memory) pair at most
/// once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeParams {
    pub k: usize,
    pub mu: usize,
    pub deterministic: bool,
}

impl EncodeParams {
    pub fn new(k: usize, mu: usize) -> Self {
        Self {
            k,
            mu,
            deterministic: false,
        }
    }

    /// The conclusive path bound for this memory size on `p`.
    pub fn conclusive_k(p: &Pomdp, mu: usize) -> usize {
        p.num_states() * mu
    }
}

/// Which encoding a formula came from, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    Memoryless { k: usize },
    SmallMemory { k: usize, mu: usize, m0: usize },
}

/// A built formula together with the variable map needed to read
/// strategies back out of models.
#[derive(Debug)]
pub struct Encoding {
    pub formula: CnfFormula,
    pub map: VarMap,
    pub kind: EncodingKind,
}

impl Encoding {
    /// Semantically named variables (actions, reach, path, updates).
    pub fn named_vars(&self) -> usize {
        self.map.len() - self.map.num_aux()
    }

    /// Tseitin auxiliaries introduced by the path recurrence.
    pub fn aux_vars(&self) -> usize {
        self.map.num_aux()
    }

    /// The product `|S|²·mu²·|Z|·|A|·k` that clause counts are measured
    /// against.
    pub fn size_envelope(&self, p: &Pomdp) -> u64 {
        let (k, mu) = match self.kind {
            EncodingKind::Memoryless { k } => (k, 1),
            EncodingKind::SmallMemory { k, mu, .. } => (k, mu),
        };
        let ns = p.num_states() as u64;
        let mu = mu as u64;
        (ns * ns)
            * (mu * mu)
            * p.num_observations() as u64
            * p.num_actions() as u64
            * k as u64
    }
}

/// Builds the encoding selected by `params`, adding determinism
/// constraints when asked.  Memory-indexed encodings start in memory
/// state 0, which loses no generality.
pub fn encode(p: &Pomdp, params: EncodeParams) -> Encoding {
    let mut enc = if params.mu == 1 {
        encode_memoryless(p, params.k)
    } else {
        encode_small_memory(p, params.k, params.mu, 0)
    };
    if params.deterministic {
        add_determinism(&mut enc, p);
    }
    enc
}

fn emit(f: &mut CnfFormula, lits: &[i32]) {
    f.add_clause(lits).expect("encoder emits well-formed clauses");
}

/// Path literal with known constants folded: the goal has a path at
/// every step, no other state has one at step 0.
fn path_expr(map: &VarMap, goal: usize, state: usize, step: usize) -> BoolExpr {
    if state == goal {
        BoolExpr::Const(true)
    } else if step == 0 {
        BoolExpr::Const(false)
    } else {
        BoolExpr::lit(map.var(&VarKey::Path { state, step }))
    }
}

fn path_mem_expr(
    map: &VarMap,
    goal: usize,
    state: usize,
    mem: usize,
    step: usize,
) -> BoolExpr {
    if state == goal {
        BoolExpr::Const(true)
    } else if step == 0 {
        BoolExpr::Const(false)
    } else {
        BoolExpr::lit(map.var(&VarKey::PathMem { state, mem, step }))
    }
}

/// Observation-stationary encoding: is there an assignment of one
/// action support per observation such that the play stays inside
/// states with goal paths of at most `k` steps?
pub fn encode_memoryless(p: &Pomdp, k: usize) -> Encoding {
    assert!(k >= 1, "path bound must be at least 1");
    let ns = p.num_states();
    let na = p.num_actions();
    let goal = p.goal();
    let mut f = CnfFormula::new();
    let mut map = VarMap::new();

    for state in 0..ns {
        for action in 0..na {
            map.fresh_var(&mut f, VarKey::ActionAt { state, action })
                .expect("action keys are distinct");
        }
    }
    for state in 0..ns {
        map.fresh_var(&mut f, VarKey::Reach { state })
            .expect("reach keys are distinct");
    }
    for state in 0..ns {
        for step in 0..=k {
            map.fresh_var(&mut f, VarKey::Path { state, step })
                .expect("path keys are distinct");
        }
    }

    // Some action is chosen in every state.
    for state in 0..ns {
        let lits: Vec<i32> = (0..na)
            .map(|action| map.var(&VarKey::ActionAt { state, action }))
            .collect();
        emit(&mut f, &lits);
    }
    // States with equal observations choose identically.
    for class in p.observation_classes() {
        for i in 0..class.len() {
            for j in i + 1..class.len() {
                for action in 0..na {
                    let x = map.var(&VarKey::ActionAt { state: class[i], action });
                    let y = map.var(&VarKey::ActionAt { state: class[j], action });
                    emit(&mut f, &[-x, y]);
                    emit(&mut f, &[x, -y]);
                }
            }
        }
    }
    // Reach closes under chosen actions.  Self-loops would be
    // tautologies, so they are skipped.
    for state in 0..ns {
        for action in 0..na {
            let a = map.var(&VarKey::ActionAt { state, action });
            let c = map.var(&VarKey::Reach { state });
            for succ in p.support_successors(state, action) {
                if succ != state {
                    let cs = map.var(&VarKey::Reach { state: succ });
                    emit(&mut f, &[-c, -a, cs]);
                }
            }
        }
    }
    // The initial state is reached.
    emit(&mut f, &[map.var(&VarKey::Reach { state: p.initial() })]);
    // The goal has a path at every step count.
    for step in 0..=k {
        emit(&mut f, &[map.var(&VarKey::Path { state: goal, step })]);
    }
    // Every reached state has a full-length path.
    for state in 0..ns {
        let c = map.var(&VarKey::Reach { state });
        let pk = map.var(&VarKey::Path { state, step: k });
        emit(&mut f, &[-c, pk]);
    }
    // No non-goal state has a zero-step path.
    for state in (0..ns).filter(|&s| s != goal) {
        emit(&mut f, &[-map.var(&VarKey::Path { state, step: 0 })]);
    }
    // The path recurrence: a step along some chosen action reaches a
    // state with a shorter path.
    for state in (0..ns).filter(|&s| s != goal) {
        for step in 1..=k {
            let lhs = map.var(&VarKey::Path { state, step });
            let choices: Vec<BoolExpr> = (0..na)
                .map(|action| {
                    let onward: Vec<BoolExpr> = p
                        .support_successors(state, action)
                        .map(|succ| path_expr(&map, goal, succ, step - 1))
                        .collect();
                    BoolExpr::and(vec![
                        BoolExpr::lit(map.var(&VarKey::ActionAt { state, action })),
                        BoolExpr::or(onward),
                    ])
                })
                .collect();
            let rhs = BoolExpr::or(choices);
            crate::cnf::tseitin_iff(&mut f, &mut map, lhs, &rhs, TseitinMode::Full)
                .expect("path recurrence is well-formed");
        }
    }

    Encoding {
        formula: f,
        map,
        kind: EncodingKind::Memoryless { k },
    }
}

/// Memory-indexed encoding: is there a strategy with `mu` memory states
/// (action per memory state, memory update per memory, observation, and
/// action) that wins from memory state `m0`?
pub fn encode_small_memory(p: &Pomdp, k: usize, mu: usize, m0: usize) -> Encoding {
    assert!(k >= 1, "path bound must be at least 1");
    assert!(mu >= 1, "memory size must be at least 1");
    assert!(m0 < mu, "initial memory out of range");
    let ns = p.num_states();
    let na = p.num_actions();
    let nz = p.num_observations();
    let goal = p.goal();
    let mut f = CnfFormula::new();
    let mut map = VarMap::new();

    for mem in 0..mu {
        for action in 0..na {
            map.fresh_var(&mut f, VarKey::ActionIn { mem, action })
                .expect("action keys are distinct");
        }
    }
    for state in 0..ns {
        for mem in 0..mu {
            map.fresh_var(&mut f, VarKey::ReachMem { state, mem })
                .expect("reach keys are distinct");
        }
    }
    for state in 0..ns {
        for mem in 0..mu {
            for step in 0..=k {
                map.fresh_var(&mut f, VarKey::PathMem { state, mem, step })
                    .expect("path keys are distinct");
            }
        }
    }
    for mem in 0..mu {
        for obs in 0..nz {
            for action in 0..na {
                for next_mem in 0..mu {
                    map.fresh_var(&mut f, VarKey::Update { mem, obs, action, next_mem })
                        .expect("update keys are distinct");
                }
            }
        }
    }

    // Some action is chosen in every memory state.
    for mem in 0..mu {
        let lits: Vec<i32> = (0..na)
            .map(|action| map.var(&VarKey::ActionIn { mem, action }))
            .collect();
        emit(&mut f, &lits);
    }
    // Every (memory, observation, action) context updates somewhere.
    for mem in 0..mu {
        for obs in 0..nz {
            for action in 0..na {
                let lits: Vec<i32> = (0..mu)
                    .map(|next_mem| {
                        map.var(&VarKey::Update { mem, obs, action, next_mem })
                    })
                    .collect();
                emit(&mut f, &lits);
            }
        }
    }
    // Reach closes under chosen actions and allowed updates, where the
    // update reads the successor's observation.
    for state in 0..ns {
        for mem in 0..mu {
            let c = map.var(&VarKey::ReachMem { state, mem });
            for action in 0..na {
                let a = map.var(&VarKey::ActionIn { mem, action });
                for succ in p.support_successors(state, action) {
                    let obs = p.obs_of(succ);
                    for next_mem in 0..mu {
                        if succ == state && next_mem == mem {
                            continue;
                        }
                        let m = map.var(&VarKey::Update { mem, obs, action, next_mem });
                        let cs = map.var(&VarKey::ReachMem { state: succ, mem: next_mem });
                        emit(&mut f, &[-c, -a, -m, cs]);
                    }
                }
            }
        }
    }
    // The initial configuration is reached.
    emit(
        &mut f,
        &[map.var(&VarKey::ReachMem { state: p.initial(), mem: m0 })],
    );
    // The goal has a path at every step count, in every memory state.
    for mem in 0..mu {
        for step in 0..=k {
            emit(
                &mut f,
                &[map.var(&VarKey::PathMem { state: goal, mem, step })],
            );
        }
    }
    // Every reached configuration has a full-length path.
    for state in 0..ns {
        for mem in 0..mu {
            let c = map.var(&VarKey::ReachMem { state, mem });
            let pk = map.var(&VarKey::PathMem { state, mem, step: k });
            emit(&mut f, &[-c, pk]);
        }
    }
    // No non-goal configuration has a zero-step path.
    for state in (0..ns).filter(|&s| s != goal) {
        for mem in 0..mu {
            emit(
                &mut f,
                &[-map.var(&VarKey::PathMem { state, mem, step: 0 })],
            );
        }
    }
    // The path recurrence over (state, memory) pairs.
    for state in (0..ns).filter(|&s| s != goal) {
        for mem in 0..mu {
            for step in 1..=k {
                let lhs = map.var(&VarKey::PathMem { state, mem, step });
                let choices: Vec<BoolExpr> = (0..na)
                    .map(|action| {
                        let mut onward = Vec::new();
                        for succ in p.support_successors(state, action) {
                            let obs = p.obs_of(succ);
                            for next_mem in 0..mu {
                                let m = map.var(&VarKey::Update {
                                    mem,
                                    obs,
                                    action,
                                    next_mem,
                                });
                                onward.push(BoolExpr::and(vec![
                                    BoolExpr::lit(m),
                                    path_mem_expr(&map, goal, succ, next_mem, step - 1),
                                ]));
                            }
                        }
                        BoolExpr::and(vec![
                            BoolExpr::lit(map.var(&VarKey::ActionIn { mem, action })),
                            BoolExpr::or(onward),
                        ])
                    })
                    .collect();
                let rhs = BoolExpr::or(choices);
                crate::cnf::tseitin_iff(&mut f, &mut map, lhs, &rhs, TseitinMode::Full)
                    .expect("path recurrence is well-formed");
            }
        }
    }

    Encoding {
        formula: f,
        map,
        kind: EncodingKind::SmallMemory { k, mu, m0 },
    }
}

fn at_most_one(f: &mut CnfFormula, vars: &[i32]) {
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            emit(f, &[-vars[i], -vars[j]]);
        }
    }
}

/// Restricts an encoding to deterministic strategies: exactly one action
/// per observation class (or memory state) and exactly one successor
/// memory per update context.  At-least-one clauses are already part of
/// the base encoding, so only pairwise at-most-one clauses are added.
pub fn add_determinism(enc: &mut Encoding, p: &Pomdp) {
    let na = p.num_actions();
    match enc.kind {
        EncodingKind::Memoryless { .. } => {
            // Equal-observation states are already tied together, so
            // constraining one representative per class suffices.
            for class in p.observation_classes() {
                let Some(&rep) = class.first() else { continue };
                let vars: Vec<i32> = (0..na)
                    .map(|action| enc.map.var(&VarKey::ActionAt { state: rep, action }))
                    .collect();
                at_most_one(&mut enc.formula, &vars);
            }
        }
        EncodingKind::SmallMemory { mu, .. } => {
            for mem in 0..mu {
                let vars: Vec<i32> = (0..na)
                    .map(|action| enc.map.var(&VarKey::ActionIn { mem, action }))
                    .collect();
                at_most_one(&mut enc.formula, &vars);
            }
            for mem in 0..mu {
                for obs in 0..p.num_observations() {
                    for action in 0..na {
                        let vars: Vec<i32> = (0..mu)
                            .map(|next_mem| {
                                enc.map.var(&VarKey::Update { mem, obs, action, next_mem })
                            })
                            .collect();
                        at_most_one(&mut enc.formula, &vars);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::pomdp::parse_pomdp;
    use crate::solver::{solve, SatOutcome, SolverConfig};
    use crate::strategy::{
        brute_force_exists, build_product_graph, extract_memoryless, extract_small_memory,
        verify_almost_sure, StrategyClass, VerifyOutcome,
    };
    use std::collections::BTreeSet;

    fn outcome(enc: &Encoding) -> SatOutcome {
        solve(&enc.formula, &SolverConfig::default()).outcome
    }

    fn is_sat(enc: &Encoding) -> bool {
        match outcome(enc) {
            SatOutcome::Sat { .. } => true,
            SatOutcome::Unsat => false,
            SatOutcome::Unknown => panic!("solver gave up on a test formula"),
        }
    }

    #[test]
    fn m1_is_winning_at_depth_one() {
        let p = fixtures::m1();
        let enc = encode_memoryless(&p, 1);
        let SatOutcome::Sat { model } = outcome(&enc) else {
            panic!("one step reaches the goal half the time")
        };
        let s = extract_memoryless(&p, &enc.map, &model).unwrap();
        assert_eq!(s.mu(), 1);
        assert_eq!(s.action_support(0), &BTreeSet::from([0]));
        assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
    }

    #[test]
    fn m2_is_unsatisfiable_at_the_conclusive_bound() {
        let p = fixtures::m2();
        assert!(!is_sat(&encode_memoryless(&p, 3)));
        assert!(!is_sat(&encode_small_memory(&p, 6, 2, 0)));
    }

    #[test]
    fn m3_with_one_memory_state_wins() {
        let p = fixtures::m3();
        let enc = encode_small_memory(&p, 4, 1, 0);
        let SatOutcome::Sat { model } = outcome(&enc) else {
            panic!("a constant support containing `a` wins")
        };
        let s = extract_small_memory(&p, 1, 0, &enc.map, &model).unwrap();
        assert!(s.action_support(0).contains(&0), "must keep playing a");
        assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
        let g = build_product_graph(&p, &s).unwrap();
        assert_eq!(g.reachable_nodes().count(), 4, "all of s0, V, U, G get visited");
    }

    /// Three states and two actions at depth two: 6 action + 3 reach +
    /// 9 path variables.
    #[test]
    fn variable_layout_is_frozen() {
        let text = "\
states: x y G
actions: a b
observations: zx zy zg
init: x
goal: G
obs: x zx
obs: y zy
obs: G zg
trans: x a y 1.0
trans: x b x 1.0
trans: y a G 1.0
trans: y b x 1.0
trans: G a G 1.0
trans: G b G 1.0
";
        let p = parse_pomdp(text).unwrap();
        let enc = encode_memoryless(&p, 2);
        assert_eq!(enc.named_vars(), 18);
        assert_eq!(enc.map.var(&VarKey::ActionAt { state: 0, action: 0 }), 1);
        assert_eq!(enc.map.var(&VarKey::ActionAt { state: 2, action: 1 }), 6);
        assert_eq!(enc.map.var(&VarKey::Reach { state: 0 }), 7);
        assert_eq!(enc.map.var(&VarKey::Reach { state: 2 }), 9);
        assert_eq!(enc.map.var(&VarKey::Path { state: 0, step: 0 }), 10);
        assert_eq!(enc.map.var(&VarKey::Path { state: 2, step: 2 }), 18);
        assert!(enc.formula.num_vars() as usize >= 18);
        assert!(is_sat(&enc), "x -> y -> G is a two-step win");
    }

    #[test]
    fn single_memory_updates_collapse_to_forced_units() {
        let p = fixtures::m1();
        let enc = encode_small_memory(&p, 2, 1, 0);
        let mut forced_updates = 0;
        for clause in enc.formula.iter() {
            if clause.len() == 1 && clause[0] > 0 {
                if let Some(VarKey::Update { .. }) = enc.map.key_of(clause[0]) {
                    forced_updates += 1;
                }
            }
        }
        assert_eq!(
            forced_updates,
            p.num_observations() * p.num_actions(),
            "one forced update per (observation, action)"
        );
        assert!(is_sat(&enc));
    }

    #[test]
    fn observation_reaction_beats_single_memory() {
        let p = fixtures::forked();
        assert!(is_sat(&encode_memoryless(&p, 5)));
        assert!(!is_sat(&encode_small_memory(&p, 5, 1, 0)));
        assert!(is_sat(&encode_small_memory(&p, 10, 2, 0)));
    }

    #[test]
    fn determinism_adds_no_clauses_for_a_single_action() {
        let p = fixtures::m1();
        let mut enc = encode_memoryless(&p, 2);
        let before = enc.formula.num_clauses();
        add_determinism(&mut enc, &p);
        assert_eq!(enc.formula.num_clauses(), before);
        let mut enc = encode_small_memory(&p, 2, 2, 0);
        let before = enc.formula.num_clauses();
        add_determinism(&mut enc, &p);
        // Only the update contexts have multiple candidates: one pair
        // per (memory, observation, action).
        assert_eq!(enc.formula.num_clauses(), before + 2 * 2 * 1);
    }

    #[test]
    fn determinism_adds_pairwise_clauses_for_three_actions() {
        let text = "\
states: s G
actions: a b c
observations: zs zg
init: s
goal: G
obs: s zs
obs: G zg
trans: s a G 1.0
trans: s b s 1.0
trans: s c s 1.0
trans: G a G 1.0
trans: G b G 1.0
trans: G c G 1.0
";
        let p = parse_pomdp(text).unwrap();
        let mut enc = encode_small_memory(&p, 1, 1, 0);
        let before = enc.formula.num_clauses();
        add_determinism(&mut enc, &p);
        assert_eq!(
            enc.formula.num_clauses(),
            before + 3,
            "three action pairs, no update pairs at one memory state"
        );
        assert!(is_sat(&enc));
    }

    /// Two states behind one observation, each with its own safe action
    /// and a self-loop otherwise.  Any single action starves one of the
    /// two, so only mixed supports win.
    const MIXER: &str = "\
states: I x y G
actions: a b
observations: zi zxy zg
init: I
goal: G
obs: I zi
obs: x zxy
obs: y zxy
obs: G zg
trans: I a x 0.5
trans: I a y 0.5
trans: I b x 0.5
trans: I b y 0.5
trans: x a G 1.0
trans: x b x 1.0
trans: y a y 1.0
trans: y b G 1.0
trans: G a G 1.0
trans: G b G 1.0
";

    #[test]
    fn mixing_can_be_required() {
        let p = parse_pomdp(MIXER).unwrap();
        let plain = encode_memoryless(&p, 4);
        let SatOutcome::Sat { model } = outcome(&plain) else {
            panic!("the mixed support wins")
        };
        let s = extract_memoryless(&p, &plain.map, &model).unwrap();
        assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
        let zxy = p.obs_index("zxy").unwrap();
        let mem_for_class = if s.mu() == 1 { 0 } else { zxy };
        assert_eq!(
            s.action_support(mem_for_class),
            &BTreeSet::from([0, 1]),
            "the shared class must mix"
        );

        let mut det = encode_memoryless(&p, 4);
        add_determinism(&mut det, &p);
        assert!(!is_sat(&det), "no deterministic choice serves both rooms");

        // The same split, confirmed strategy by strategy: every
        // deterministic per-class choice loses.
        let nz = p.num_observations();
        let na = p.num_actions();
        for combo in 0..na.pow(nz as u32) {
            let mut rest = combo;
            let mut supports = Vec::new();
            for _ in 0..nz {
                supports.push(BTreeSet::from([rest % na]));
                rest /= na;
            }
            let mut update = vec![vec![vec![BTreeSet::new(); na]; nz]; nz];
            for per_obs in update.iter_mut() {
                for (z, per_action) in per_obs.iter_mut().enumerate() {
                    for sup in per_action.iter_mut() {
                        sup.insert(z);
                    }
                }
            }
            let det_strategy = crate::strategy::FiniteMemoryStrategy::new(
                p.obs_of(p.initial()),
                supports,
                update,
            )
            .unwrap();
            assert_ne!(
                verify_almost_sure(&p, &det_strategy),
                Ok(VerifyOutcome::AlmostSure),
                "deterministic combo {combo} should lose"
            );
        }
    }

    #[test]
    fn satisfiability_is_monotone_in_k() {
        for seed in 0..30 {
            let p = crate::benchgen::random_pomdp(&crate::benchgen::RandomParams::small(), seed);
            let k = 1 + (seed as usize % p.num_states());
            if is_sat(&encode_memoryless(&p, k)) {
                assert!(
                    is_sat(&encode_memoryless(&p, k + 1)),
                    "seed {seed}: loosening the path bound lost a strategy"
                );
            }
        }
    }

    #[test]
    fn satisfiability_is_monotone_in_memory() {
        for seed in 0..15 {
            let p = crate::benchgen::random_pomdp(&crate::benchgen::RandomParams::tiny(), seed);
            let k = p.num_states();
            if is_sat(&encode_small_memory(&p, k, 1, 0)) {
                assert!(
                    is_sat(&encode_small_memory(&p, k, 2, 0)),
                    "seed {seed}: an extra memory state lost a strategy"
                );
            }
        }
    }

    #[test]
    fn solver_and_brute_force_agree_on_random_models() {
        for seed in 100..140 {
            let p = crate::benchgen::random_pomdp(&crate::benchgen::RandomParams::tiny(), seed);
            let k = EncodeParams::conclusive_k(&p, 1);
            let enc = encode_memoryless(&p, k);
            let oracle = brute_force_exists(&p, StrategyClass::Memoryless, 10_000_000)
                .expect("tiny models fit the budget");
            match outcome(&enc) {
                SatOutcome::Sat { model } => {
                    assert!(oracle.is_some(), "seed {seed}: solver won, oracle lost");
                    let s = extract_memoryless(&p, &enc.map, &model).unwrap();
                    assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
                }
                SatOutcome::Unsat => {
                    assert!(oracle.is_none(), "seed {seed}: solver lost, oracle won");
                }
                SatOutcome::Unknown => panic!("no budget was set"),
            }

            let k2 = EncodeParams::conclusive_k(&p, 2);
            let enc2 = encode_small_memory(&p, k2, 2, 0);
            let oracle2 = brute_force_exists(&p, StrategyClass::SmallMemory { mu: 2 }, 10_000_000)
                .expect("tiny models fit the budget");
            match outcome(&enc2) {
                SatOutcome::Sat { model } => {
                    assert!(oracle2.is_some(), "seed {seed}: solver won with memory, oracle lost");
                    let s = extract_small_memory(&p, 2, 0, &enc2.map, &model).unwrap();
                    assert_eq!(verify_almost_sure(&p, &s), Ok(VerifyOutcome::AlmostSure));
                }
                SatOutcome::Unsat => {
                    assert!(oracle2.is_none(), "seed {seed}: solver lost with memory, oracle won");
                }
                SatOutcome::Unknown => panic!("no budget was set"),
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let p = fixtures::m3();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let enc_a = encode_memoryless(&p, 4);
        let enc_b = encode_memoryless(&p, 4);
        crate::cnf::write_dimacs(&enc_a.formula, Some(&enc_a.map), &mut a).unwrap();
        crate::cnf::write_dimacs(&enc_b.formula, Some(&enc_b.map), &mut b).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn driver_selects_by_memory_size() {
        let p = fixtures::m1();
        let one = encode(&p, EncodeParams::new(2, 1));
        assert!(matches!(one.kind, EncodingKind::Memoryless { k: 2 }));
        let two = encode(&p, EncodeParams::new(2, 2));
        assert!(matches!(
            two.kind,
            EncodingKind::SmallMemory { k: 2, mu: 2, m0: 0 }
        ));
        let det = encode(
            &p,
            EncodeParams {
                k: 2,
                mu: 1,
                deterministic: true,
            },
        );
        assert!(det.formula.num_clauses() >= one.formula.num_clauses());
        assert_eq!(one.size_envelope(&p), 2 * 2 * 2 * 1 * 2);
    }
}
