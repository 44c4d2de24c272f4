//! Experiment plumbing: configs, the per-seed runner, aggregation, output
//! files and the built-in check suites.

pub mod config;
pub mod instrument;
mod learner;
pub mod metrics;
pub mod output;
pub mod parallel;
pub mod runner;
pub mod suites;

pub use learner::{FixedMapLearner, Learner, UniformLearner};
