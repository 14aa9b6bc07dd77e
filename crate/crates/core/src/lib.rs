//! Predictive-information robot controller with its arena simulator,
//! experiment protocol and rank-statistics pipeline.

pub mod config;
pub mod exec;
pub mod experiment;
pub mod pi;
pub mod sim;
pub mod stats;
