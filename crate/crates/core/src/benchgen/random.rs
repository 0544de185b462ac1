//! Seeded random models for differential testing.
//!
//! The generator draws a raw model (random supports, random observation
//! labeling, a random target state, optionally extra absorbing traps) and
//! normalizes the target into a fresh absorbing goal with a dedicated
//! observation.  Uniform probabilities are assigned to each support; the
//! analyses in this crate only ever look at the supports.

use super::rng::SplitMix64;
use crate::pomdp::{Pomdp, RawPomdp};

/// Size envelope for [`random_pomdp`].  Counts are for the raw model;
/// goal normalization may add one state and one observation.
#[derive(Debug, Clone)]
pub struct RandomParams {
    pub states: (usize, usize),
    pub actions: (usize, usize),
    pub observations: (usize, usize),
    /// Largest support of a single transition row.
    pub max_support: usize,
    /// Probability that a non-target state is made absorbing, which
    /// seeds the corpus with losing instances.
    pub trap_bias: f64,
}

impl RandomParams {
    /// At most 6 states, 3 actions, 4 observations after normalization.
    pub fn small() -> Self {
        Self {
            states: (2, 5),
            actions: (1, 3),
            observations: (1, 3),
            max_support: 3,
            trap_bias: 0.15,
        }
    }

    /// At most 4 states for brute-force-friendly corpora.
    pub fn tiny() -> Self {
        Self {
            states: (2, 3),
            actions: (1, 2),
            observations: (1, 2),
            max_support: 2,
            trap_bias: 0.2,
        }
    }
}

/// Deterministically generates a valid model from `seed`.
pub fn random_pomdp(params: &RandomParams, seed: u64) -> Pomdp {
    let mut rng = SplitMix64::new(seed);
    let ns = rng.range(params.states.0, params.states.1);
    let na = rng.range(params.actions.0, params.actions.1);
    let nz = rng.range(params.observations.0, params.observations.1.min(ns));

    let state_names = (0..ns).map(|i| format!("s{i}")).collect::<Vec<_>>();
    let action_names = (0..na).map(|i| format!("a{i}")).collect::<Vec<_>>();
    let obs_names = (0..nz).map(|i| format!("z{i}")).collect::<Vec<_>>();

    // Every observation labels at least one state so none is vacuous.
    let mut obs_of: Vec<usize> = (0..ns).map(|s| s % nz).collect();
    for z in obs_of.iter_mut() {
        if rng.chance(0.5) {
            *z = rng.below(nz);
        }
    }
    for z in 0..nz {
        if !obs_of.contains(&z) {
            let s = rng.below(ns);
            obs_of[s] = z;
        }
    }

    let target = rng.below(ns);
    let mut trans = Vec::with_capacity(ns);
    for s in 0..ns {
        let absorbing = s != target && rng.chance(params.trap_bias);
        let mut rows = Vec::with_capacity(na);
        for _ in 0..na {
            if absorbing {
                rows.push(vec![(s, 1.0)]);
                continue;
            }
            let width = rng.range(1, params.max_support.min(ns));
            let mut support = Vec::new();
            while support.len() < width {
                let t = rng.below(ns);
                if !support.contains(&t) {
                    support.push(t);
                }
            }
            support.sort_unstable();
            let p = 1.0 / support.len() as f64;
            rows.push(support.into_iter().map(|t| (t, p)).collect());
        }
        trans.push(rows);
    }

    let raw = RawPomdp {
        state_names,
        action_names,
        obs_names,
        trans,
        obs_of,
        initial: 0,
        targets: vec![target],
    };
    raw.normalize_goal()
        .expect("generated raw model is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::format_pomdp;

    #[test]
    fn models_respect_small_envelope() {
        for seed in 0..200 {
            let p = random_pomdp(&RandomParams::small(), seed);
            assert!(p.num_states() <= 6, "seed {seed}: {} states", p.num_states());
            assert!(p.num_actions() <= 3);
            assert!(p.num_observations() <= 4);
            // The goal is absorbing and alone in its observation class.
            let classes = p.observation_classes();
            assert_eq!(classes[p.obs_of(p.goal())], vec![p.goal()]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_pomdp(&RandomParams::small(), 7);
        let b = random_pomdp(&RandomParams::small(), 7);
        assert_eq!(format_pomdp(&a), format_pomdp(&b));
    }

    #[test]
    fn different_seeds_differ_somewhere() {
        let texts: Vec<String> = (0..20)
            .map(|seed| format_pomdp(&random_pomdp(&RandomParams::small(), seed)))
            .collect();
        let distinct: std::collections::BTreeSet<&String> = texts.iter().collect();
        assert!(distinct.len() > 10);
    }
}
