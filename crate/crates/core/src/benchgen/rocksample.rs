//! A rover collecting rock samples on a 3x3 grid.
//!
//! Rock positions are public; whether a rock is worth sampling is not.
//! The rover moves deterministically, sees its own cell, and sees the
//! quality of a rock only while standing on it.  Sampling a bad rock
//! wrecks the rover.  Sampling a good rock banks a sample, but
//! sampling the same rock again is careless: with probability one half
//! the stored sample is destroyed and the rock has to be sampled once
//! more.  Banking two samples wins.
//!
//! Whether the rover can tell "sample now" from "move on" is exactly
//! what it has to remember, since its senses look identical in both
//! situations.

use std::collections::BTreeMap;

use crate::pomdp::{Pomdp, RawPomdp, StateId};

use super::GenError;

const GRID: usize = 3;

/// Rock quality: fixed in the instance, or drawn by a fair coin when
/// the run starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RockType {
    Good,
    Bad,
    Random,
}

#[derive(Debug, Clone)]
pub struct RockSampleParams {
    pub rocks: Vec<((usize, usize), RockType)>,
    pub rover: (usize, usize),
}

impl RockSampleParams {
    /// The shipped verdict fixture: two surely good rocks in a row, so
    /// two banked samples are four actions away.
    pub fn two_good() -> Self {
        Self {
            rocks: vec![((1, 0), RockType::Good), ((2, 0), RockType::Good)],
            rover: (0, 0),
        }
    }

    /// The shipped size fixture: four coin-flip rocks.
    pub fn four_random() -> Self {
        Self {
            rocks: vec![
                ((0, 1), RockType::Random),
                ((1, 2), RockType::Random),
                ((2, 0), RockType::Random),
                ((2, 2), RockType::Random),
            ],
            rover: (0, 0),
        }
    }
}

/// A concrete mid-run situation: rover cell, which rocks currently
/// hold a banked sample, and how the coin flips came out.
type Node = ((usize, usize), u32, u32);

pub fn gen_rocksample(params: &RockSampleParams) -> Result<Pomdp, GenError> {
    validate(params)?;
    let _n = params.rocks.len();
    let random_idx: Vec<usize> = params
        .rocks
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| *t == RockType::Random)
        .map(|(i, _)| i)
        .collect();
    let rock_at = |c: (usize, usize)| params.rocks.iter().position(|&(pos, _)| pos == c);
    let is_good = |i: usize, asg: u32| match params.rocks[i].1 {
        RockType::Good => true,
        RockType::Bad => false,
        RockType::Random => {
            let bit = random_idx.iter().position(|&j| j == i).unwrap();
            asg >> bit & 1 == 1
        }
    };

    let dirs: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let step = |c: (usize, usize), d: usize| -> (usize, usize) {
        let x = c.0 as isize + dirs[d].0;
        let y = c.1 as isize + dirs[d].1;
        if x >= 0 && y >= 0 && (x as usize) < GRID && (y as usize) < GRID {
            (x as usize, y as usize)
        } else {
            c
        }
    };

    // Where one action leads, before states get numbered.
    #[derive(Clone, Copy, PartialEq)]
    enum Dest {
        At(Node),
        Goal,
        Sink,
    }
    let outcomes = |node: Node, action: usize| -> Vec<(Dest, f64)> {
        let (c, mask, asg) = node;
        if action < 4 {
            return vec![(Dest::At((step(c, action), mask, asg)), 1.0)];
        }
        match rock_at(c) {
            None => vec![(Dest::At(node), 1.0)],
            Some(i) if !is_good(i, asg) => vec![(Dest::Sink, 1.0)],
            Some(i) if mask >> i & 1 == 0 => {
                let banked = mask | 1 << i;
                if banked.count_ones() == 2 {
                    vec![(Dest::Goal, 1.0)]
                } else {
                    vec![(Dest::At((c, banked, asg)), 1.0)]
                }
            }
            Some(i) => vec![
                (Dest::At(node), 0.5),
                (Dest::At((c, mask & !(1 << i), asg)), 0.5),
            ],
        }
    };

    // Forward search over reachable situations; discovery order fixes
    // the numbering.
    let start_nodes: Vec<Node> = (0..1u32 << random_idx.len())
        .map(|asg| (params.rover, 0, asg))
        .collect();
    let fan = start_nodes.len() > 1;
    let mut id: BTreeMap<Node, StateId> = BTreeMap::new();
    let mut order: Vec<Node> = Vec::new();
    let mut queue: std::collections::VecDeque<Node> = start_nodes.iter().copied().collect();
    let base = usize::from(fan);
    for &s in &start_nodes {
        id.insert(s, base + order.len());
        order.push(s);
    }
    while let Some(node) = queue.pop_front() {
        for a in 0..5 {
            for (dest, _) in outcomes(node, a) {
                if let Dest::At(next) = dest {
                    if !id.contains_key(&next) {
                        id.insert(next, base + order.len());
                        order.push(next);
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    let sink: StateId = base + order.len();
    let goal: StateId = sink + 1;
    let num_states = goal + 1;

    let mut state_names = Vec::with_capacity(num_states);
    if fan {
        state_names.push("init".to_string());
    }
    for &((x, y), mask, asg) in &order {
        state_names.push(format!("v{x}_{y}m{mask}t{asg}"));
    }
    state_names.push("wrecked".into());
    state_names.push("done".into());

    let mut obs_names: Vec<String> = Vec::new();
    let obs_id = |name: String, obs_names: &mut Vec<String>| -> usize {
        if let Some(i) = obs_names.iter().position(|n| n == &name) {
            i
        } else {
            obs_names.push(name);
            obs_names.len() - 1
        }
    };
    let mut obs_of = Vec::with_capacity(num_states);
    if fan {
        let z = obs_id("zinit".into(), &mut obs_names);
        obs_of.push(z);
    }
    for &((x, y), _, asg) in &order {
        let quality = match rock_at((x, y)) {
            Some(i) if is_good(i, asg) => "g",
            Some(_) => "b",
            None => "",
        };
        let z = obs_id(format!("c{x}_{y}{quality}"), &mut obs_names);
        obs_of.push(z);
    }
    let z = obs_id("zwrecked".into(), &mut obs_names);
    obs_of.push(z);
    let z = obs_id("zdone".into(), &mut obs_names);
    obs_of.push(z);

    let mut trans = Vec::with_capacity(num_states);
    if fan {
        let share = 1.0 / start_nodes.len() as f64;
        let row: Vec<(StateId, f64)> = start_nodes.iter().map(|s| (id[s], share)).collect();
        trans.push(vec![row; 5]);
    }
    for &node in &order {
        let rows: Vec<Vec<(StateId, f64)>> = (0..5)
            .map(|a| {
                outcomes(node, a)
                    .into_iter()
                    .map(|(dest, pr)| {
                        let s = match dest {
                            Dest::At(next) => id[&next],
                            Dest::Goal => goal,
                            Dest::Sink => sink,
                        };
                        (s, pr)
                    })
                    .collect()
            })
            .collect();
        trans.push(rows);
    }
    trans.push(vec![vec![(sink, 1.0)]; 5]);
    trans.push(vec![vec![(goal, 1.0)]; 5]);

    let raw = RawPomdp {
        state_names,
        action_names: vec![
            "north".into(),
            "east".into(),
            "south".into(),
            "west".into(),
            "sample".into(),
        ],
        obs_names,
        trans,
        obs_of,
        initial: 0,
        targets: vec![goal],
    };
    raw.normalize_goal()
        .map_err(|e| GenError::InvalidParams(format!("internal construction error: {e}")))
}

fn validate(params: &RockSampleParams) -> Result<(), GenError> {
    let bad = |msg: &str| Err(GenError::InvalidParams(msg.into()));
    if params.rocks.len() < 2 {
        return bad("at least two rocks are required");
    }
    if params.rocks.len() > 8 {
        return bad("at most eight rocks fit the encoding");
    }
    let in_grid = |c: (usize, usize)| c.0 < GRID && c.1 < GRID;
    if !in_grid(params.rover) {
        return bad("the rover must start inside the grid");
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(pos, _) in &params.rocks {
        if !in_grid(pos) {
            return bad("every rock must lie inside the grid");
        }
        if !seen.insert(pos) {
            return bad("two rocks share a cell");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{baseline_winning, DEFAULT_NODE_CAP};
    use crate::encoder::{encode_small_memory, EncodeParams};
    use crate::solver::{solve, SolverConfig};

    fn sat_small(p: &Pomdp, k: usize, mu: usize) -> bool {
        let enc = encode_small_memory(p, k, mu, 0);
        solve(&enc.formula, &SolverConfig::default()).outcome.is_sat()
    }

    #[test]
    fn two_good_rocks_need_two_memory_states_and_a_short_horizon() {
        let p = gen_rocksample(&RockSampleParams::two_good()).unwrap();
        // 9 cells x {nothing, first rock, second rock} banked, plus
        // wreck sink and goal.
        assert_eq!(p.num_states(), 29);
        assert!(sat_small(&p, 8, 2));
    }

    #[test]
    fn two_bad_rocks_are_hopeless() {
        let p = gen_rocksample(&RockSampleParams {
            rocks: vec![((1, 0), RockType::Bad), ((2, 0), RockType::Bad)],
            rover: (0, 0),
        })
        .unwrap();
        assert_eq!(baseline_winning(&p, DEFAULT_NODE_CAP), Ok(false));
        assert!(!sat_small(&p, EncodeParams::conclusive_k(&p, 1), 1));
        assert!(!sat_small(&p, EncodeParams::conclusive_k(&p, 2), 2));
    }

    #[test]
    fn coin_flip_rocks_multiply_the_state_space() {
        let p = gen_rocksample(&RockSampleParams::four_random()).unwrap();
        // Per coin outcome with g good rocks the rover can bank at most
        // one sample before winning, giving 1 + g masks per cell:
        // sum over the 16 outcomes of 9 * (1 + g) = 432, plus the fan
        // state, the sink, and the goal.
        assert_eq!(p.num_states(), 435);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(gen_rocksample(&RockSampleParams {
            rocks: vec![((0, 0), RockType::Good)],
            rover: (0, 0),
        })
        .is_err());
        assert!(gen_rocksample(&RockSampleParams {
            rocks: vec![((0, 0), RockType::Good), ((0, 0), RockType::Bad)],
            rover: (1, 1),
        })
        .is_err());
        assert!(gen_rocksample(&RockSampleParams {
            rocks: vec![((0, 0), RockType::Good), ((3, 0), RockType::Bad)],
            rover: (1, 1),
        })
        .is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_rocksample(&RockSampleParams::four_random()).unwrap();
        let b = gen_rocksample(&RockSampleParams::four_random()).unwrap();
        assert_eq!(crate::pomdp::format_pomdp(&a), crate::pomdp::format_pomdp(&b));
    }

    #[test]
    fn shipped_fixture_file_matches_the_generator() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/rocksample2.pomdp"
        );
        let text = std::fs::read_to_string(path).unwrap();
        let p = gen_rocksample(&RockSampleParams::two_good()).unwrap();
        assert_eq!(text, crate::pomdp::format_pomdp(&p));
    }
}
