use std::sync::atomic::{AtomicU64, Ordering};

use poca::allocator::{allocate, baseline_schedule, build_candidates, Schedule};
use poca::bracket::{build_hyperband, run_bracket, Candidate, FidelityLadder};
use poca::orchestrator::{Mode, RunConfig};
use poca::space::Configuration;
use poca::EvalError;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn ladder_strategy() -> impl Strategy<Value = FidelityLadder> {
    (1u64..=5, 2u64..=4, 1u32..=4).prop_map(|(b_min, f, levels)| {
        FidelityLadder::with_factor(b_min, b_min * f.pow(levels), f).unwrap()
    })
}

/// Ladder plus a total budget no smaller than one full-length hyperband.
fn instance() -> impl Strategy<Value = (FidelityLadder, u64)> {
    ladder_strategy().prop_flat_map(|ladder| {
        let full = build_hyperband(&ladder, ladder.b_max()).unwrap().total_cost;
        (Just(ladder), full..=full * 40)
    })
}

fn check_invariants(s: &Schedule, ladder: &FidelityLadder) -> Result<(), TestCaseError> {
    let t = s.total_budget;
    prop_assert!(
        s.hyperbands
            .windows(2)
            .all(|w| w[0].max_budget <= w[1].max_budget),
        "not ascending"
    );
    let full: u64 = s
        .hyperbands
        .iter()
        .filter(|h| h.max_budget == ladder.b_max())
        .map(|h| h.total_cost)
        .sum();
    prop_assert!(2 * full >= t, "max-length share {full} of {t}");
    let b2 = build_hyperband(ladder, ladder.budgets()[1])
        .unwrap()
        .total_cost;
    prop_assert!(s.leftover < b2, "leftover {} >= B_2 {b2}", s.leftover);
    prop_assert_eq!(s.total_cost() + s.leftover, t);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn poca_schedule_invariants((ladder, t) in instance()) {
        let s = allocate(t, &build_candidates(&ladder).unwrap()).unwrap();
        check_invariants(&s, &ladder)?;
        prop_assert_eq!(&s, &allocate(t, &build_candidates(&ladder).unwrap()).unwrap());
        let filled = RunConfig::new(Mode::Poca, t, ladder.clone(), 0).schedule().unwrap();
        prop_assert_eq!(&filled.hyperbands, &s.hyperbands);
        prop_assert_eq!(filled.p.len(), s.len());
        prop_assert!(filled.p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn baseline_schedule_conserves_budget((ladder, t) in instance()) {
        let s = baseline_schedule(t, &ladder).unwrap();
        prop_assert!(s.hyperbands.iter().all(|h| h.max_budget == ladder.b_max()));
        prop_assert_eq!(s.total_cost() + s.leftover, t);
        prop_assert!(s.leftover < build_hyperband(&ladder, ladder.b_max()).unwrap().total_cost);
    }

    #[test]
    fn poca_tests_at_least_as_many_configs((ladder, t) in instance()) {
        let poca = allocate(t, &build_candidates(&ladder).unwrap()).unwrap();
        let base = baseline_schedule(t, &ladder).unwrap();
        prop_assert!(poca.total_configs() >= base.total_configs(), "{} < {}", poca.total_configs(), base.total_configs());
    }

    #[test]
    fn hyperband_plans_follow_closed_form(ladder in ladder_strategy(), top in 1usize..5) {
        let top = top.min(ladder.len() - 1);
        let max_budget = ladder.budgets()[top];
        let plan = build_hyperband(&ladder, max_budget).unwrap();
        let f = ladder.factor();
        prop_assert_eq!(plan.s_max, top);
        prop_assert_eq!(plan.n_brackets(), top + 1);
        let mut cost = 0;
        let mut configs = 0;
        for b in &plan.brackets {
            let n0 = ((plan.s_max + 1) / (b.s + 1)) as u64 * f.pow(b.s as u32);
            prop_assert_eq!(b.n0, n0);
            prop_assert_eq!(b.r0, max_budget / f.pow(b.s as u32));
            prop_assert_eq!(b.rungs.first().unwrap().count, n0);
            prop_assert_eq!(b.rungs.last().unwrap().budget, max_budget);
            for w in b.rungs.windows(2) {
                prop_assert_eq!(w[1].count, w[0].count / f);
                prop_assert_eq!(w[1].budget, w[0].budget * f);
                prop_assert!(w[1].count >= 1);
            }
            cost += b.rungs.iter().map(|r| r.count * r.budget).sum::<u64>();
            configs += n0;
        }
        prop_assert_eq!(plan.total_cost, cost);
        prop_assert_eq!(plan.total_configs, configs);
    }
}

/// Brackets with distinct, budget-independent losses: the winner must be the
/// minimum over all initial candidates, and the evaluated cost must equal the
/// plan cost.
#[test]
fn bracket_winner_matches_brute_force_minimum() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (ladder_strategy(), 0usize..5, any::<u64>());
    for _ in 0..100 {
        let (ladder, pick, seed) = strategy.new_tree(&mut runner).unwrap().current();
        let plan = build_hyperband(&ladder, ladder.b_max()).unwrap();
        let bracket = &plan.brackets[pick % plan.n_brackets()];
        // A seed-keyed permutation of 0..n0 gives distinct losses.
        let n0 = bracket.n0 as usize;
        let mut losses: Vec<f64> = (0..n0).map(|i| i as f64).collect();
        let mut s = poca::rng::stream(seed);
        use rand::seq::SliceRandom;
        losses.shuffle(&mut s);

        let mut next = 0u64;
        let supplier = || {
            let c = Candidate {
                id: next,
                config: Configuration::new(vec![]),
            };
            next += 1;
            c
        };
        let spent = AtomicU64::new(0);
        let evaluator = |c: &Candidate, budget: u64| -> Result<f64, EvalError> {
            spent.fetch_add(budget, Ordering::SeqCst);
            Ok(losses[c.id as usize])
        };
        let mut sunk = 0u64;
        let result = run_bracket(bracket, supplier, &evaluator, 1, |o| {
            sunk += o.trials.iter().map(|t| t.budget).sum::<u64>()
        });
        let argmin = (0..n0)
            .min_by(|&a, &b| losses[a].total_cmp(&losses[b]))
            .unwrap() as u64;
        assert_eq!(result.best.map(|b| b.0), Some(argmin));
        assert_eq!(sunk, bracket.cost());
        assert_eq!(spent.into_inner(), bracket.cost());
    }
}

#[test]
fn hyperband_cost_through_sink_equals_plan_cost() {
    for (b_min, b_max, f) in [(1, 8, 2), (9, 729, 3), (1, 81, 3), (2, 128, 4)] {
        let ladder = FidelityLadder::with_factor(b_min, b_max, f).unwrap();
        let plan = build_hyperband(&ladder, b_max).unwrap();
        let mut total = 0u64;
        let mut id = 0u64;
        for bracket in &plan.brackets {
            let supplier = || {
                id += 1;
                Candidate {
                    id,
                    config: Configuration::new(vec![]),
                }
            };
            let evaluator = |c: &Candidate, b: u64| -> Result<f64, EvalError> {
                Ok(((c.id * 7919) % 101) as f64 / b as f64)
            };
            run_bracket(bracket, supplier, &evaluator, 2, |o| {
                total += o.trials.iter().map(|t| t.budget).sum::<u64>()
            });
        }
        assert_eq!(total, plan.total_cost);
    }
}
