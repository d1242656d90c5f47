//! Multi-fidelity hyperparameter optimisation with budget-aware
//! hyperband scheduling.
//!
//! The pieces, bottom up:
//!
//! - [`space`]: hyperparameter domains, sampling, validation and encoding.
//! - [`bracket`]: fidelity ladders, successive-halving brackets and hyperband plans.
//! - [`allocator`]: how many hyperbands of each length fit a total budget.
//! - [`tpe`]: a good/bad kernel density pair and density-ratio proposals.
//! - [`selection`]: per-hyperband choice between uniform and model sampling.
//! - [`objective`]: the evaluation contract, Counting Ones, external workers.
//! - [`orchestrator`]: the optimisation loop and replications.
//! - [`report`]: summaries recomputed from run logs, CSV tables.

pub mod allocator;
pub mod bracket;
pub mod error;
pub mod objective;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod selection;
pub mod space;
pub mod tpe;

pub use error::{Error, EvalError, Result};
