//! Experiment orchestration around `steer-core`: task-set generation, the
//! table evaluation protocols, agent characterizations, matrix-game
//! adaptation sweeps, and deterministic CSV/JSON artifact emission.

pub mod characterize;
pub mod checks;
pub mod config;
pub mod experiments;
pub mod report;
pub mod results;
pub mod taskgen;
