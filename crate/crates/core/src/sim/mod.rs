//! Deterministic round orchestration: message delivery, scheduling,
//! byte metering, validation and metrics output.
//!
//! Each round every device reads the messages its neighbors published in the
//! previous round, so results do not depend on evaluation order or on the
//! number of worker threads.

mod config;
mod engine;
pub(crate) mod metrics;

pub use config::{DataSource, PartitionChoice, SimConfig, TopologySpec};
pub use engine::{run, run_with_data, save_models, worker_count, RunOutput, WORKERS_ENV};
pub use metrics::{
    convergence_bound, overhead_bytes, rounds_to_target, save_metrics_csv, write_metrics_csv, RoundMetrics,
    TargetRounds, METRICS_HEADER,
};
