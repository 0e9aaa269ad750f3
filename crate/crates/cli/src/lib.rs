//! Experiment runner, configuration and model persistence for `eon1`.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod persist;
