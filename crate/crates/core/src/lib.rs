//! Deterministic discrete-event simulator for power-aware batch scheduling
//! on HPC clusters.

pub mod engine;
pub mod metrics;
pub mod platform;
pub mod sched;
pub mod units;
pub mod workload;
pub mod report;
pub mod rlenv;
pub mod config;
pub mod cli;
