//! Experiment-tracking analysis for reinforcement learning: run queries,
//! learning-curve alignment, score normalization, bootstrap statistics and
//! plotting.

pub mod cli;
pub mod curves;
pub mod estimators;
pub mod filterdsl;
pub mod ingest;
pub mod model;
pub mod render;
pub mod rlstats;
pub mod rng;
pub mod scores;
