//! Experiment harness: deterministic RNG, config parsing, study sweeps,
//! output manifests, and the command-line front end.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod rng;
pub mod study;
