//! Adversarial contextual bandits with delayed feedback.
//!
//! The crate is split the way a simulation is assembled:
//!
//! - [`simplex`], [`rng`], [`delay`], [`feedback`]: shared domain types, the
//!   seeded randomness contract, delay schedules and the FIFO pending queue.
//! - [`envs`]: realizable stochastic instances, scripted adversarial policy
//!   instances and the executable lower-bound constructions.
//! - [`exp4dale`]: EXP4 with delay-adapted loss estimators over a finite
//!   policy class, plus a plain EXP4 reference learner.
//! - [`oracles`]: the online least-squares regression oracle interface, the
//!   Hedge-based aggregating forecaster and scripted/perfect oracles.
//! - [`dafa`]: the delay-adapted function-approximation learner driving an
//!   oracle and solving the log-barrier action-selection problem.
//! - [`harness`]: configs, the seed-parallel runner, metrics, aggregation,
//!   CSV/JSON output and the built-in verification suites.

pub mod dafa;
pub mod delay;
pub mod envs;
pub mod error;
pub mod exp4dale;
pub mod feedback;
pub mod harness;
pub mod oracles;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
