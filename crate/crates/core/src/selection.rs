//! Uniform-versus-model choice for each new configuration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ConfigSpace, Configuration};
use crate::tpe::TpeModel;

/// Probability of uniform sampling used by the BOHB-style baseline.
pub const BASELINE_RANDOM_FRACTION: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Random,
    Model,
}

/// Per-hyperband probabilities of uniform sampling, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionSchedule {
    p: Vec<f64>,
}

impl SelectionSchedule {
    /// Linear decay `p_k = 0.5 (1 - k/(h-1))`; a single hyperband gets 0.5.
    pub fn decaying(h: usize) -> Result<Self> {
        match h {
            0 => Err(Error::InvalidArgument(
                "selection schedule needs at least one hyperband".into(),
            )),
            1 => Ok(Self { p: vec![0.5] }),
            _ => {
                let last = (h - 1) as f64;
                Ok(Self {
                    p: (0..h).map(|k| 0.5 * (1.0 - k as f64 / last)).collect(),
                })
            }
        }
    }

    pub fn constant(h: usize, p: f64) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidArgument(
                "selection schedule needs at least one hyperband".into(),
            ));
        }
        Ok(Self { p: vec![p; h] })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self, k: usize) -> f64 {
        self.p[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

pub fn make_schedule(h: usize) -> Result<SelectionSchedule> {
    SelectionSchedule::decaying(h)
}

/// Picks the next configuration for hyperband `k`. Without a model the draw
/// is always uniform.
pub fn select<R: Rng + ?Sized>(
    schedule: &SelectionSchedule,
    k: usize,
    model: Option<&TpeModel>,
    space: &ConfigSpace,
    rng: &mut R,
) -> (Configuration, Provenance) {
    match model {
        None => (space.sample_uniform(rng), Provenance::Random),
        Some(m) => {
            if rng.random::<f64>() < schedule.p(k) {
                (space.sample_uniform(rng), Provenance::Random)
            } else {
                (m.propose(space, rng), Provenance::Model)
            }
        }
    }
}
