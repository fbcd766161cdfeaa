//! Command implementations and benchmark experiments behind the `dualqp`
//! binary.
//!
//! The binary itself only parses arguments; everything observable lives here
//! so integration tests can drive the same code paths directly.

pub mod commands;
pub mod experiments;

pub use commands::{
    run_oracle, run_solve, SolveOptions, EXIT_ILL_POSED, EXIT_ITERATION_CAP, EXIT_OK,
};
pub use experiments::{run_eq_timing, run_last_vs_average, run_sensitivity, BenchSpec, RunRecord};
