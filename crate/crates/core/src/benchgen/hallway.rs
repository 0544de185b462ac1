//! Grid navigation with an oriented robot and egocentric wall sensing.
//!
//! The robot walks a rectangular grid with barrier cells it cannot
//! enter and trap cells that destroy it.  It has three actions (move
//! forward, turn left, turn right), each failing with a fixed
//! probability, in which case nothing changes.  It only senses which of
//! the four sides of its cell are blocked, *relative to its own
//! orientation*, so different places can look alike and plain
//! observation-stationary play is often too weak.
//!
//! States are (cell, orientation) pairs for passable cells, plus an
//! absorbing trap sink, plus (when the initial region has several
//! cells) a fresh start state fanning uniformly into the region, all
//! facing south.  Entering the goal cell in any orientation wins; goal
//! normalization turns that into a single absorbing goal state.

use crate::pomdp::{Pomdp, RawPomdp, StateId};

use super::GenError;

/// Geometry and dynamics of one Hallway instance.  Coordinates are
/// (x, y) with x < width and y < height; y grows to the south.
#[derive(Debug, Clone)]
pub struct HallwayParams {
    pub width: usize,
    pub height: usize,
    pub barriers: Vec<(usize, usize)>,
    pub traps: Vec<(usize, usize)>,
    pub goal: (usize, usize),
    pub initial_region: Vec<(usize, usize)>,
    pub fail_prob: f64,
}

impl HallwayParams {
    /// The shipped fixture: a 3x3 room with one barrier and one trap
    /// where observation-stationary play is provably too weak and one
    /// extra memory bit suffices.
    pub fn split_fixture() -> Self {
        Self {
            width: 3,
            height: 3,
            barriers: vec![(1, 2)],
            traps: vec![(1, 0)],
            goal: (2, 2),
            initial_region: vec![(0, 0), (0, 2)],
            fail_prob: 0.2,
        }
    }
}

/// Orientation order: north, east, south, west.
const ORIENT: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
const ORIENT_NAME: [char; 4] = ['n', 'e', 's', 'w'];
const SOUTH: usize = 2;

pub fn gen_hallway(params: &HallwayParams) -> Result<Pomdp, GenError> {
    validate(params)?;
    let HallwayParams {
        width,
        height,
        fail_prob,
        ..
    } = *params;
    let barrier = |c: (usize, usize)| params.barriers.contains(&c);
    let trap = |c: (usize, usize)| params.traps.contains(&c);
    let passable = |c: (usize, usize)| !barrier(c) && !trap(c);

    // Passable cells in row-major order carry four orientation states
    // each; traps collapse into one sink.
    let mut cells = Vec::new();
    for y in 0..height {
        for x in 0..width {
            if passable((x, y)) {
                cells.push((x, y));
            }
        }
    }
    let cell_index = |c: (usize, usize)| cells.iter().position(|&d| d == c).unwrap();
    let state_of = |c: (usize, usize), o: usize| cell_index(c) * 4 + o;
    let num_oriented = cells.len() * 4;
    let fan = params.initial_region.len() > 1;
    let start: Option<StateId> = fan.then_some(num_oriented);
    let sink: StateId = num_oriented + usize::from(fan);
    let num_states = sink + 1;

    let mut state_names = Vec::with_capacity(num_states);
    for &(x, y) in &cells {
        for o in 0..4 {
            state_names.push(format!("r{x}_{y}{}", ORIENT_NAME[o]));
        }
    }
    if fan {
        state_names.push("start".to_string());
    }
    state_names.push("trap".to_string());

    // A side is blocked by the grid edge or a barrier; traps are open
    // ground as far as the sensors care.
    let blocked = |c: (usize, usize), o: usize| -> bool {
        let (dx, dy) = ORIENT[o];
        let x = c.0 as isize + dx;
        let y = c.1 as isize + dy;
        if x < 0 || y < 0 || x as usize >= width || y as usize >= height {
            return true;
        }
        barrier((x as usize, y as usize))
    };

    // Observations: egocentric wall pattern front-right-back-left,
    // plus dedicated labels for the start state and the sink.
    let mut obs_names: Vec<String> = Vec::new();
    let mut obs_of = Vec::with_capacity(num_states);
    let obs_id = |name: String, obs_names: &mut Vec<String>| -> usize {
        if let Some(i) = obs_names.iter().position(|n| n == &name) {
            i
        } else {
            obs_names.push(name);
            obs_names.len() - 1
        }
    };
    for &c in &cells {
        for o in 0..4 {
            let bits: String = (0..4)
                .map(|rel| if blocked(c, (o + rel) % 4) { '1' } else { '0' })
                .collect();
            let z = obs_id(format!("w{bits}"), &mut obs_names);
            obs_of.push(z);
        }
    }
    if fan {
        let z = obs_id("zstart".to_string(), &mut obs_names);
        obs_of.push(z);
    }
    let z = obs_id("ztrap".to_string(), &mut obs_names);
    obs_of.push(z);

    let p_ok = 1.0 - fail_prob;
    let mut trans = vec![Vec::new(); num_states];
    for &c in &cells {
        for o in 0..4 {
            let here = state_of(c, o);
            // forward
            let fwd = if blocked(c, o) {
                vec![(here, 1.0)]
            } else {
                let (dx, dy) = ORIENT[o];
                let t = (
                    (c.0 as isize + dx) as usize,
                    (c.1 as isize + dy) as usize,
                );
                let dest = if trap(t) { sink } else { state_of(t, o) };
                vec![(dest, p_ok), (here, fail_prob)]
            };
            // turns keep the cell and may fail too
            let left = vec![(state_of(c, (o + 3) % 4), p_ok), (here, fail_prob)];
            let right = vec![(state_of(c, (o + 1) % 4), p_ok), (here, fail_prob)];
            trans[here] = vec![fwd, left, right];
        }
    }
    if let Some(start) = start {
        let share = 1.0 / params.initial_region.len() as f64;
        let fan_row: Vec<(StateId, f64)> = params
            .initial_region
            .iter()
            .map(|&c| (state_of(c, SOUTH), share))
            .collect();
        trans[start] = vec![fan_row; 3];
    }
    trans[sink] = vec![vec![(sink, 1.0)]; 3];

    let initial = match start {
        Some(s) => s,
        None => state_of(params.initial_region[0], SOUTH),
    };
    let targets: Vec<StateId> = (0..4).map(|o| state_of(params.goal, o)).collect();

    let raw = RawPomdp {
        state_names,
        action_names: vec!["fwd".into(), "left".into(), "right".into()],
        obs_names,
        trans,
        obs_of,
        initial,
        targets,
    };
    raw.normalize_goal()
        .map_err(|e| GenError::InvalidParams(format!("internal construction error: {e}")))
}

fn validate(params: &HallwayParams) -> Result<(), GenError> {
    let bad = |msg: String| Err(GenError::InvalidParams(msg));
    if params.width == 0 || params.height == 0 {
        return bad("grid must have positive area".into());
    }
    let in_grid = |c: (usize, usize)| c.0 < params.width && c.1 < params.height;
    for &c in params
        .barriers
        .iter()
        .chain(&params.traps)
        .chain(&params.initial_region)
        .chain([&params.goal])
    {
        if !in_grid(c) {
            return bad(format!("cell ({}, {}) is outside the grid", c.0, c.1));
        }
    }
    for (name, cells) in [
        ("barriers", &params.barriers),
        ("traps", &params.traps),
        ("initial region", &params.initial_region),
    ] {
        let mut seen = std::collections::BTreeSet::new();
        if !cells.iter().all(|c| seen.insert(c)) {
            return bad(format!("{name} lists a cell twice"));
        }
    }
    if params.barriers.iter().any(|b| params.traps.contains(b)) {
        return bad("a cell cannot be both barrier and trap".into());
    }
    if params.barriers.contains(&params.goal) || params.traps.contains(&params.goal) {
        return bad("the goal cell must be passable".into());
    }
    if params.initial_region.is_empty() {
        return bad("the initial region is empty".into());
    }
    if params
        .initial_region
        .iter()
        .any(|c| params.traps.contains(c) || params.barriers.contains(c))
    {
        return bad("the initial region must be passable".into());
    }
    if !(params.fail_prob > 0.0 && params.fail_prob < 1.0) {
        return bad("failure probability must lie strictly between 0 and 1".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{baseline_winning, DEFAULT_NODE_CAP};
    use crate::encoder::{encode_memoryless, encode_small_memory, EncodeParams};
    use crate::solver::{solve, SatOutcome, SolverConfig};

    fn sat(f: &crate::cnf::CnfFormula) -> bool {
        match solve(f, &SolverConfig::default()).outcome {
            SatOutcome::Sat { .. } => true,
            SatOutcome::Unsat => false,
            SatOutcome::Unknown => panic!("no budget was set"),
        }
    }

    #[test]
    fn open_grid_state_count_follows_the_formula() {
        let p = gen_hallway(&HallwayParams {
            width: 3,
            height: 2,
            barriers: vec![],
            traps: vec![],
            goal: (2, 1),
            initial_region: vec![(0, 0), (0, 1)],
            fail_prob: 0.3,
        })
        .unwrap();
        // 6 cells x 4 orientations, plus start fan, trap sink, and the
        // normalized goal.
        assert_eq!(p.num_states(), 3 * 2 * 4 + 3);
        assert_eq!(p.num_actions(), 3);
    }

    #[test]
    fn starting_on_the_goal_wins_in_one_step() {
        let p = gen_hallway(&HallwayParams {
            width: 3,
            height: 2,
            barriers: vec![],
            traps: vec![],
            goal: (1, 1),
            initial_region: vec![(1, 1)],
            fail_prob: 0.1,
        })
        .unwrap();
        // Single-cell region: no fan state, the initial state is the
        // goal cell facing south, one hop from the normalized goal.
        let enc = encode_memoryless(&p, 1);
        assert!(sat(&enc.formula));
    }

    #[test]
    fn walled_off_goal_is_hopeless() {
        let p = gen_hallway(&HallwayParams {
            width: 3,
            height: 3,
            barriers: vec![(1, 2), (2, 1)],
            traps: vec![],
            goal: (2, 2),
            initial_region: vec![(0, 0)],
            fail_prob: 0.1,
        })
        .unwrap();
        assert_eq!(baseline_winning(&p, DEFAULT_NODE_CAP), Ok(false));
        assert!(!sat(&encode_memoryless(&p, EncodeParams::conclusive_k(&p, 1)).formula));
        assert!(!sat(
            &encode_small_memory(&p, EncodeParams::conclusive_k(&p, 2), 2, 0).formula
        ));
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut params = HallwayParams::split_fixture();
        params.goal = params.traps[0];
        assert!(gen_hallway(&params).is_err());
        let mut params = HallwayParams::split_fixture();
        params.initial_region.clear();
        assert!(gen_hallway(&params).is_err());
        let mut params = HallwayParams::split_fixture();
        params.fail_prob = 1.0;
        assert!(gen_hallway(&params).is_err());
        let mut params = HallwayParams::split_fixture();
        params.barriers.push((9, 9));
        assert!(gen_hallway(&params).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_hallway(&HallwayParams::split_fixture()).unwrap();
        let b = gen_hallway(&HallwayParams::split_fixture()).unwrap();
        assert_eq!(crate::pomdp::format_pomdp(&a), crate::pomdp::format_pomdp(&b));
    }

    #[test]
    fn shipped_fixture_file_matches_the_generator() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/hallway_split.pomdp"
        );
        let text = std::fs::read_to_string(path).unwrap();
        let p = gen_hallway(&HallwayParams::split_fixture()).unwrap();
        assert_eq!(text, crate::pomdp::format_pomdp(&p));
    }

    #[test]
    fn split_fixture_needs_exactly_two_memory_states() {
        let p = gen_hallway(&HallwayParams::split_fixture()).unwrap();
        assert!(
            !sat(&encode_memoryless(&p, EncodeParams::conclusive_k(&p, 1)).formula),
            "observation-stationary play must fail"
        );
        assert!(
            sat(&encode_small_memory(&p, 2 * p.num_states(), 2, 0).formula),
            "two memory states must suffice"
        );
    }
}
