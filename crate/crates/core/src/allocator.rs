//! Hyperband scheduling under a total budget.

use serde::Serialize;

use crate::bracket::{build_hyperband, FidelityLadder, HyperbandPlan};
use crate::error::{Error, Result};

/// A hyperband that may be scheduled, one per ladder budget above `b_min`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CandidateHyperband {
    pub max_budget: u64,
    pub cost: u64,
    pub plan: HyperbandPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub total_budget: u64,
    /// Execution order: ascending maximum budget.
    pub hyperbands: Vec<HyperbandPlan>,
    pub leftover: u64,
    /// Per-hyperband probability of uniform sampling; filled by the
    /// selection policy.
    pub p: Vec<f64>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.hyperbands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyperbands.is_empty()
    }

    pub fn total_configs(&self) -> u64 {
        self.hyperbands.iter().map(|h| h.total_configs).sum()
    }

    pub fn total_cost(&self) -> u64 {
        self.hyperbands.iter().map(|h| h.total_cost).sum()
    }

    /// Run-length summary `(max_budget, count)` in execution order.
    pub fn counts(&self) -> Vec<(u64, usize)> {
        let mut out: Vec<(u64, usize)> = Vec::new();
        for hb in &self.hyperbands {
            match out.last_mut() {
                Some((b, n)) if *b == hb.max_budget => *n += 1,
                _ => out.push((hb.max_budget, 1)),
            }
        }
        out
    }
}

pub fn build_candidates(ladder: &FidelityLadder) -> Result<Vec<CandidateHyperband>> {
    if ladder.len() < 2 {
        return Err(Error::InvalidLadder(
            "need at least two ladder budgets to build candidate hyperbands".into(),
        ));
    }
    let out: Vec<CandidateHyperband> = ladder.budgets()[1..]
        .iter()
        .map(|&b| {
            build_hyperband(ladder, b).map(|plan| CandidateHyperband {
                max_budget: b,
                cost: plan.total_cost,
                plan,
            })
        })
        .collect::<Result<_>>()?;
    debug_assert!(out.windows(2).all(|w| w[0].cost < w[1].cost));
    Ok(out)
}

/// Budget-aware schedule.
///
/// Full-length hyperbands are appended while at least half of `total`
/// remains. The remainder is filled by sweeping the shorter candidates from
/// longest to shortest, appending each one that fits and dropping it (and
/// every longer one) when it no longer does. With a two-budget ladder the
/// full-length candidate is the only one, and it fills the remainder itself.
pub fn allocate(total: u64, candidates: &[CandidateHyperband]) -> Result<Schedule> {
    let longest = candidates
        .last()
        .ok_or_else(|| Error::InvalidArgument("no candidate hyperbands".into()))?;
    if total < longest.cost {
        return Err(Error::BudgetTooSmall {
            total,
            required: longest.cost,
        });
    }
    let mut remaining = total;
    let mut picked: Vec<usize> = Vec::new();
    let last = candidates.len() - 1;

    while 2 * remaining >= total {
        picked.push(last);
        remaining -= longest.cost;
    }

    // Candidates 0..limit are still in play.
    let mut limit = if last == 0 { 1 } else { last };
    while limit > 0 {
        for j in (0..limit).rev() {
            if candidates[j].cost <= remaining {
                picked.push(j);
                remaining -= candidates[j].cost;
            } else {
                limit = j;
            }
        }
    }

    picked.sort_unstable_by_key(|&i| candidates[i].max_budget);
    Ok(Schedule {
        total_budget: total,
        hyperbands: picked
            .into_iter()
            .map(|i| candidates[i].plan.clone())
            .collect(),
        leftover: remaining,
        p: Vec::new(),
    })
}

/// Hyperband/BOHB-style schedule: repeat the full-length hyperband.
pub fn baseline_schedule(total: u64, ladder: &FidelityLadder) -> Result<Schedule> {
    let plan = build_hyperband(ladder, ladder.b_max())?;
    if total < plan.total_cost {
        return Err(Error::BudgetTooSmall {
            total,
            required: plan.total_cost,
        });
    }
    let n = total / plan.total_cost;
    Ok(Schedule {
        total_budget: total,
        leftover: total % plan.total_cost,
        hyperbands: vec![plan; n as usize],
        p: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder(b_min: u64, b_max: u64, eta: f64) -> FidelityLadder {
        FidelityLadder::new(b_min, b_max, eta).unwrap()
    }

    #[test]
    fn candidate_costs() {
        let c = build_candidates(&ladder(1, 8, 0.5)).unwrap();
        assert_eq!(
            c.iter().map(|c| c.cost).collect::<Vec<_>>(),
            vec![8, 32, 120]
        );
        let c = build_candidates(&ladder(9, 729, 1.0 / 3.0)).unwrap();
        assert_eq!(c.last().unwrap().cost, 15309);
        let c = build_candidates(&ladder(1, 2, 0.5)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].cost, 8);
        assert!(build_candidates(&ladder(4, 4, 0.5)).is_err());
    }

    #[test]
    fn worked_example_t600() {
        let l = ladder(1, 8, 0.5);
        let s = allocate(600, &build_candidates(&l).unwrap()).unwrap();
        assert_eq!(s.counts(), vec![(2, 6), (4, 6), (8, 3)]);
        assert_eq!(s.total_configs(), 138);
        assert_eq!(s.leftover, 0);
        assert_eq!(s.len(), 15);

        let b = baseline_schedule(600, &l).unwrap();
        assert_eq!(b.counts(), vec![(8, 5)]);
        assert_eq!(b.total_configs(), 100);
        assert_eq!(b.leftover, 0);
    }

    #[test]
    fn exact_single_hyperband() {
        let l = ladder(1, 8, 0.5);
        let s = allocate(120, &build_candidates(&l).unwrap()).unwrap();
        assert_eq!(s.counts(), vec![(8, 1)]);
        assert_eq!(s.leftover, 0);
        assert_eq!(baseline_schedule(120, &l).unwrap().len(), 1);
    }

    #[test]
    fn too_small() {
        let l = ladder(1, 8, 0.5);
        let err = allocate(50, &build_candidates(&l).unwrap()).unwrap_err();
        assert!(matches!(
            err,
            Error::BudgetTooSmall {
                total: 50,
                required: 120
            }
        ));
        assert!(baseline_schedule(50, &l).is_err());
    }

    #[test]
    fn counting_ones_schedules() {
        let l = ladder(9, 729, 1.0 / 3.0);
        let s = allocate(153_100, &build_candidates(&l).unwrap()).unwrap();
        assert_eq!(s.counts(), vec![(27, 16), (81, 13), (243, 14), (729, 6)]);
        assert_eq!(s.leftover, 64);
        assert_eq!(s.total_configs(), 1687);
        assert_eq!(s.total_cost() + s.leftover, 153_100);

        let b = baseline_schedule(153_100, &l).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b.leftover, 10);
        assert_eq!(b.total_configs(), 1280);
    }

    #[test]
    fn two_rung_ladder_fills_with_full_length() {
        let l = ladder(1, 2, 0.5);
        let s = allocate(100, &build_candidates(&l).unwrap()).unwrap();
        assert_eq!(s.counts(), vec![(2, 12)]);
        assert_eq!(s.leftover, 4);
    }
}
