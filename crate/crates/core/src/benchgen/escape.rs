//! Pursuit on a grid: a robot must stay clear of a randomly walking
//! agent forever.
//!
//! The robot picks one of four compass moves each step (blocked moves
//! keep it in place) and is caught if it steps onto the agent or the
//! agent then steps onto it.  The agent moves uniformly at random to
//! an adjacent cell.  The robot senses the walls around its own cell
//! and, only while the agent is orthogonally adjacent, which side it
//! is on.
//!
//! Staying safe forever is turned into reachability by an escape
//! hatch: every capture-free state keeps a fixed positive probability
//! of jumping straight to an absorbing goal.  Reaching the goal almost
//! surely is then the same as never being caught, and because the
//! hatch sits on every safe state, one step already suffices for the
//! path bound once a safe strategy exists at all.

use std::collections::BTreeMap;

use crate::pomdp::{Pomdp, RawPomdp, StateId};

use super::GenError;

/// Probability mass of the per-step jump to the goal.
const ESCAPE_PROB: f64 = 0.1;

/// A square arena with the two start positions and an optional
/// obstacle cell neither party can enter.
#[derive(Debug, Clone)]
pub struct EscapeParams {
    pub n: usize,
    pub robot: (usize, usize),
    pub agent: (usize, usize),
    pub barrier: Option<(usize, usize)>,
}

impl EscapeParams {
    /// The shipped fixture: smallest arena, an obstacle in the
    /// north-east corner, the robot starting at the center and the
    /// agent in the north-west corner.
    pub fn three() -> Self {
        Self {
            n: 3,
            robot: (1, 1),
            agent: (0, 0),
            barrier: Some((2, 0)),
        }
    }
}

pub fn gen_escape(params: &EscapeParams) -> Result<Pomdp, GenError> {
    if params.n < 3 {
        return Err(GenError::InvalidParams(
            "the arena must be at least 3x3".into(),
        ));
    }
    escape_grid(params.n, params.n, params.robot, params.agent, params.barrier)
}

/// Rectangular variant behind the square API; degenerate corridors
/// (width or height 1) are useful in tests.
pub(crate) fn escape_grid(
    width: usize,
    height: usize,
    robot: (usize, usize),
    agent: (usize, usize),
    barrier: Option<(usize, usize)>,
) -> Result<Pomdp, GenError> {
    let bad = |msg: &str| Err(GenError::InvalidParams(msg.into()));
    if width == 0 || height == 0 {
        return bad("the arena must have positive area");
    }
    if let Some(b) = barrier {
        if b.0 >= width || b.1 >= height {
            return bad("the obstacle must lie inside the arena");
        }
    }
    let in_grid = |c: (usize, usize)| c.0 < width && c.1 < height && Some(c) != barrier;
    if !in_grid(robot) || !in_grid(agent) {
        return bad("start positions must lie on open cells of the arena");
    }
    if robot == agent {
        return bad("robot and agent must start on different cells");
    }

    // Directions in action order: north, east, south, west.
    let dirs: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
    let step = |c: (usize, usize), d: usize| -> Option<(usize, usize)> {
        let x = c.0 as isize + dirs[d].0;
        let y = c.1 as isize + dirs[d].1;
        (x >= 0 && y >= 0 && in_grid((x as usize, y as usize)))
            .then(|| (x as usize, y as usize))
    };
    let neighbours = |c: (usize, usize)| -> Vec<(usize, usize)> {
        let out: Vec<(usize, usize)> = (0..4).filter_map(|d| step(c, d)).collect();
        if out.is_empty() {
            // A walled-in agent has nowhere to go and stays put.
            vec![c]
        } else {
            out
        }
    };

    // States are position pairs with the two apart, then the capture
    // sink, then the escape goal.
    let mut cells = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if in_grid((x, y)) {
                cells.push((x, y));
            }
        }
    }
    let mut pair_id = BTreeMap::new();
    let mut state_names = Vec::new();
    for &r in &cells {
        for &g in &cells {
            if r != g {
                pair_id.insert((r, g), state_names.len());
                state_names.push(format!("r{}_{}a{}_{}", r.0, r.1, g.0, g.1));
            }
        }
    }
    let sink: StateId = state_names.len();
    state_names.push("caught".into());
    let goal: StateId = state_names.len();
    state_names.push("escaped".into());
    let num_states = state_names.len();

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
    for (&(r, g), _) in &pair_id {
        let walls: String = (0..4)
            .map(|d| if step(r, d).is_none() { '1' } else { '0' })
            .collect();
        let adj = dirs
            .iter()
            .position(|&(dx, dy)| {
                (r.0 as isize + dx, r.1 as isize + dy) == (g.0 as isize, g.1 as isize)
            })
            .map_or("none", |d| ["n", "e", "s", "w"][d]);
        obs_of.push(obs_id(format!("w{walls}_{adj}"), &mut obs_names));
    }
    let z = obs_id("zcaught".into(), &mut obs_names);
    obs_of.push(z);
    let z = obs_id("zescaped".into(), &mut obs_names);
    obs_of.push(z);

    let mut trans = vec![Vec::new(); num_states];
    for (&(r, g), &here) in &pair_id {
        let mut rows = Vec::with_capacity(4);
        for d in 0..4 {
            let r2 = step(r, d).unwrap_or(r);
            let mut mass: BTreeMap<StateId, f64> = BTreeMap::new();
            mass.insert(goal, ESCAPE_PROB);
            let rest = 1.0 - ESCAPE_PROB;
            if r2 == g {
                *mass.entry(sink).or_insert(0.0) += rest;
            } else {
                let moves = neighbours(g);
                let share = rest / moves.len() as f64;
                for g2 in moves {
                    let dest = if g2 == r2 { sink } else { pair_id[&(r2, g2)] };
                    *mass.entry(dest).or_insert(0.0) += share;
                }
            }
            rows.push(mass.into_iter().collect());
        }
        trans[here] = rows;
    }
    trans[sink] = vec![vec![(sink, 1.0)]; 4];
    trans[goal] = vec![vec![(goal, 1.0)]; 4];

    let raw = RawPomdp {
        state_names,
        action_names: vec!["north".into(), "east".into(), "south".into(), "west".into()],
        obs_names,
        trans,
        obs_of,
        initial: pair_id[&(robot, agent)],
        targets: vec![goal],
    };
    raw.normalize_goal()
        .map_err(|e| GenError::InvalidParams(format!("internal construction error: {e}")))
}
