//! Experiment runner: configuration, seeded replications, aggregation and
//! CSV output.

pub mod config;
pub mod output;
pub mod runner;
pub mod validate;

pub use config::{parse_config, ConfigError, ExperimentConfig};
pub use output::{emit_csv, read_csv, write_csv, CSV_HEADER};
pub use runner::{
    aggregate, map_replications, run_experiment, run_experiment_with_threads, run_replication,
    AggregateRecord, HarnessError, PolicyTrace, ReplicationRecord, ReplicationSummary,
};
