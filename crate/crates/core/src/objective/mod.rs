//! Objective functions: the evaluation contract and built-in benchmarks.

mod counting_ones;
pub mod external;
pub mod protocol;

pub use counting_ones::CountingOnes;
pub use external::{ExternalObjective, ExternalOptions};

use crate::error::EvalError;
use crate::space::{ConfigSpace, Configuration};

pub trait Objective: Sync {
    fn space(&self) -> &ConfigSpace;

    /// Loss of `cfg` at `budget`. Must be deterministic in `(cfg, budget, seed)`.
    fn evaluate(&self, cfg: &Configuration, budget: u64, seed: u64) -> Result<f64, EvalError>;

    /// Noise-free loss, when the objective knows it.
    fn true_loss(&self, _cfg: &Configuration) -> Option<f64> {
        None
    }
}
