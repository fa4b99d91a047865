//! Deterministic synthetic-agent workloads against the shard registry, either
//! in this process or over HTTP, with the interval estimates used to report
//! them.

pub mod backend;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;

pub use backend::{Backend, Http, InProcess, Verdict};
pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use experiments::{
    run, run_contention_sweep, run_divergence_counters, run_dose_response, run_ori_isolation, run_stale_injection,
    run_sweep,
};
pub use report::{sweep_failures, table, ExperimentReport};
pub use stats::{rule_of_three, wilson_ci};
