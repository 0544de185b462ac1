//! Qualitative analysis of partially observable Markov decision processes.
//!
//! The central question answered here: does a finite-memory strategy with a
//! given number of memory states reach a designated goal state with
//! probability one?  Only the supports of the transition distributions
//! matter for that question, which lets the search be phrased as Boolean
//! satisfiability.  The crate provides:
//!
//! * [`pomdp`]: the model type, a line-oriented text format, and support
//!   level graph operations;
//! * [`cnf`]: CNF formulas, a semantic variable map, and Tseitin
//!   translation of Boolean expression trees;
//! * [`encoder`]: the reduction from strategy existence to SAT;
//! * [`solver`]: an embedded CDCL solver plus an adapter for external
//!   DIMACS solvers, with mandatory model validation;
//! * [`strategy`]: witness strategies, extraction from SAT models,
//!   independent verification on the product graph, and a brute-force
//!   enumeration oracle;
//! * [`baseline`]: an explicit belief-support construction used as a
//!   cross-check for general-strategy winnability;
//! * [`benchgen`]: deterministic benchmark model generators;
//! * [`pipeline`]: the encode/solve/extract/verify round trip.

#![forbid(unsafe_code)]

pub mod baseline;
pub mod benchgen;
pub mod cnf;
pub mod encoder;
pub mod pipeline;
pub mod pomdp;
pub mod solver;
pub mod strategy;
