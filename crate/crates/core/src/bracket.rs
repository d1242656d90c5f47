//! Successive-halving brackets and hyperband plans.
//!
//! Cost accounting is full: evaluating a configuration at budget `r` costs
//! `r` units regardless of any earlier, cheaper evaluation of it.

use serde::Serialize;

use crate::error::{Error, EvalError, Result};
use crate::space::Configuration;

/// Geometric budget ladder `b_min, b_min*f, ..., b_max` with growth factor
/// `f = 1/eta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityLadder {
    b_min: u64,
    b_max: u64,
    factor: u64,
    budgets: Vec<u64>,
}

/// Reciprocals within this distance of an integer are snapped to it, so
/// that a truncated decimal like `0.3333` is read as one third.
pub const ETA_TOLERANCE: f64 = 1e-3;

impl FidelityLadder {
    /// `eta` is the promotion proportion in (0, 1) and must have an integer
    /// reciprocal of at least 2.
    pub fn new(b_min: u64, b_max: u64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidLadder(format!(
                "eta must lie in (0, 1), got {eta}"
            )));
        }
        let inv = 1.0 / eta;
        let factor = inv.round();
        if (inv - factor).abs() > ETA_TOLERANCE || factor < 2.0 {
            return Err(Error::InvalidLadder(format!(
                "1/eta must be an integer >= 2, got {inv}"
            )));
        }
        Self::with_factor(b_min, b_max, factor as u64)
    }

    pub fn with_factor(b_min: u64, b_max: u64, factor: u64) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidLadder(format!(
                "growth factor must be >= 2, got {factor}"
            )));
        }
        if b_min == 0 {
            return Err(Error::InvalidLadder("b_min must be positive".into()));
        }
        let mut budgets = vec![b_min];
        let mut b = b_min;
        while b < b_max {
            b = b
                .checked_mul(factor)
                .ok_or_else(|| Error::InvalidLadder("budget ladder overflows".into()))?;
            budgets.push(b);
        }
        if b != b_max {
            return Err(Error::InvalidLadder(format!(
                "b_max = {b_max} is not b_min * {factor}^k for any k (nearest rungs end at {b})"
            )));
        }
        Ok(Self {
            b_min,
            b_max,
            factor,
            budgets,
        })
    }

    pub fn b_min(&self) -> u64 {
        self.b_min
    }

    pub fn b_max(&self) -> u64 {
        self.b_max
    }

    /// Growth factor `1/eta`.
    pub fn factor(&self) -> u64 {
        self.factor
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.factor as f64
    }

    pub fn budgets(&self) -> &[u64] {
        &self.budgets
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }

    pub fn index_of(&self, budget: u64) -> Option<usize> {
        self.budgets.iter().position(|&b| b == budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rung {
    pub count: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BracketPlan {
    pub s: usize,
    pub n0: u64,
    pub r0: u64,
    pub rungs: Vec<Rung>,
}

impl BracketPlan {
    pub fn cost(&self) -> u64 {
        self.rungs.iter().map(|r| r.count * r.budget).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HyperbandPlan {
    pub max_budget: u64,
    pub s_max: usize,
    /// Ordered from the most explorative bracket (`s = s_max`) down to `s = 0`.
    pub brackets: Vec<BracketPlan>,
    pub total_cost: u64,
    pub total_configs: u64,
}

impl HyperbandPlan {
    pub fn n_brackets(&self) -> usize {
        self.brackets.len()
    }
}

/// Builds the hyperband whose longest rung is `max_budget`.
///
/// Bracket `s` starts `floor((s_max+1)/(s+1)) * f^s` configurations at
/// budget `max_budget / f^s`, keeping `1/f` of them at every rung.
pub fn build_hyperband(ladder: &FidelityLadder, max_budget: u64) -> Result<HyperbandPlan> {
    let s_max = ladder
        .index_of(max_budget)
        .ok_or(Error::BudgetNotOnLadder(max_budget))?;
    let f = ladder.factor();
    let mut brackets = Vec::with_capacity(s_max + 1);
    for s in (0..=s_max).rev() {
        let scale = f.pow(s as u32);
        let n0 = ((s_max as u64 + 1) / (s as u64 + 1)) * scale;
        let r0 = max_budget / scale;
        let rungs: Vec<Rung> = (0..=s)
            .map(|i| {
                let step = f.pow(i as u32);
                Rung {
                    count: n0 / step,
                    budget: r0 * step,
                }
            })
            .collect();
        debug_assert!(rungs.iter().all(|r| r.count >= 1));
        debug_assert_eq!(rungs.last().map(|r| r.budget), Some(max_budget));
        brackets.push(BracketPlan { s, n0, r0, rungs });
    }
    let total_cost = brackets.iter().map(BracketPlan::cost).sum();
    let total_configs = brackets.iter().map(|b| b.n0).sum();
    Ok(HyperbandPlan {
        max_budget,
        s_max,
        brackets,
        total_cost,
        total_configs,
    })
}

/// A configuration entering a bracket, keyed by a run-wide id.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub config: Configuration,
}

/// One evaluation performed by a bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: u64,
    pub rung: usize,
    pub budget: u64,
    /// `+inf` when the evaluation failed.
    pub loss: f64,
    pub error: Option<EvalError>,
}

impl Trial {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Everything evaluated in one rung, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct RungOutcome<'a> {
    pub rung: usize,
    pub budget: u64,
    pub trials: &'a [Trial],
    pub members: &'a [&'a Candidate],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketResult {
    pub candidates: Vec<Candidate>,
    pub trials: Vec<Trial>,
    /// Id and loss of the best configuration at the last rung reached.
    pub best: Option<(u64, f64)>,
}

pub trait Evaluator: Sync {
    fn evaluate(&self, candidate: &Candidate, budget: u64) -> std::result::Result<f64, EvalError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Candidate, u64) -> std::result::Result<f64, EvalError> + Sync,
{
    fn evaluate(&self, candidate: &Candidate, budget: u64) -> std::result::Result<f64, EvalError> {
        self(candidate, budget)
    }
}

fn evaluate_one(evaluator: &dyn Evaluator, c: &Candidate, rung: usize, budget: u64) -> Trial {
    match evaluator.evaluate(c, budget) {
        Ok(loss) if loss.is_finite() => Trial {
            id: c.id,
            rung,
            budget,
            loss,
            error: None,
        },
        Ok(_) => Trial {
            id: c.id,
            rung,
            budget,
            loss: f64::INFINITY,
            error: Some(EvalError::NonFinite),
        },
        Err(e) => Trial {
            id: c.id,
            rung,
            budget,
            loss: f64::INFINITY,
            error: Some(e),
        },
    }
}

/// Evaluates a rung, fanning out over up to `jobs` threads. Output order is
/// the member order regardless of completion order.
fn evaluate_rung(
    evaluator: &dyn Evaluator,
    members: &[&Candidate],
    rung: usize,
    budget: u64,
    jobs: usize,
) -> Vec<Trial> {
    let jobs = jobs.max(1).min(members.len().max(1));
    if jobs == 1 {
        return members
            .iter()
            .map(|c| evaluate_one(evaluator, c, rung, budget))
            .collect();
    }
    let chunk = members.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = members
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|c| evaluate_one(evaluator, c, rung, budget))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("evaluation thread panicked"))
            .collect()
    })
}

/// Runs one successive-halving bracket.
///
/// The supplier is called `n0` times up front. After each rung the sink sees
/// that rung's trials; the best `count` of the next rung are then promoted by
/// loss, ties going to the earlier member. Failed members are never promoted.
pub fn run_bracket(
    plan: &BracketPlan,
    mut supplier: impl FnMut() -> Candidate,
    evaluator: &dyn Evaluator,
    jobs: usize,
    mut sink: impl FnMut(&RungOutcome<'_>),
) -> BracketResult {
    let candidates: Vec<Candidate> = (0..plan.n0).map(|_| supplier()).collect();
    let mut members: Vec<&Candidate> = candidates.iter().collect();
    let mut trials = Vec::new();
    let mut best = None;

    for (i, rung) in plan.rungs.iter().enumerate() {
        if members.is_empty() {
            break;
        }
        let results = evaluate_rung(evaluator, &members, i, rung.budget, jobs);
        sink(&RungOutcome {
            rung: i,
            budget: rung.budget,
            trials: &results,
            members: &members,
        });

        let mut order: Vec<usize> = (0..results.len())
            .filter(|&k| !results[k].failed())
            .collect();
        order.sort_by(|&a, &b| results[a].loss.total_cmp(&results[b].loss));
        best = order.first().map(|&k| (results[k].id, results[k].loss));

        if let Some(next) = plan.rungs.get(i + 1) {
            let keep = (next.count as usize).min(order.len());
            members = order[..keep].iter().map(|&k| members[k]).collect();
        }
        trials.extend(results);
    }

    BracketResult {
        candidates,
        trials,
        best,
    }
}
