//! Monte-Carlo experiment harness: configuration, seeded execution of
//! parameter sweeps, and CSV output.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, to_toml, Axis, Cell, SweepSpec, SystemConfig, MASTER_SEED_ENV};
pub use output::{aggregate, write_aggregate_csv, write_outputs, write_rows_csv, AggregateRow};
pub use runner::{run_experiment, run_seed, ResultRow, ResultTable, RunOptions};
