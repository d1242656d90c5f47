//! End-to-end optimisation loop and replication harness.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::allocator::{allocate, baseline_schedule, build_candidates, Schedule};
use crate::bracket::{run_bracket, Candidate, FidelityLadder, RungOutcome};
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::report::{mean_and_se, summarize_log, RunSummary, SummaryRow};
use crate::rng;
use crate::selection::{select, Provenance, SelectionSchedule, BASELINE_RANDOM_FRACTION};
use crate::tpe::{TpeModel, TpeState, DEFAULT_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Budget-aware schedule, decaying random fraction, one density pair.
    Poca,
    /// Repeated full-length hyperbands, random fraction 1/3, per-budget densities.
    Baseline,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Poca => "POCA",
            Mode::Baseline => "BOHB",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poca" => Ok(Mode::Poca),
            "baseline" | "bohb" => Ok(Mode::Baseline),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode `{s}` (expected poca or baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub total_budget: u64,
    pub ladder: FidelityLadder,
    pub gamma: f64,
    pub seed: u64,
    /// Worker threads per rung.
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(mode: Mode, total_budget: u64, ladder: FidelityLadder, seed: u64) -> Self {
        Self {
            mode,
            total_budget,
            ladder,
            gamma: DEFAULT_GAMMA,
            seed,
            jobs: 1,
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        let mut schedule = match self.mode {
            Mode::Poca => allocate(self.total_budget, &build_candidates(&self.ladder)?)?,
            Mode::Baseline => baseline_schedule(self.total_budget, &self.ladder)?,
        };
        schedule.p = self.selection(schedule.len())?.as_slice().to_vec();
        Ok(schedule)
    }

    fn selection(&self, h: usize) -> Result<SelectionSchedule> {
        match self.mode {
            Mode::Poca => SelectionSchedule::decaying(h),
            Mode::Baseline => SelectionSchedule::constant(h, BASELINE_RANDOM_FRACTION),
        }
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase", deny_unknown_fields)]
pub enum LogRecord {
    Schedule {
        mode: Mode,
        total_budget: u64,
        b_min: u64,
        b_max: u64,
        eta: f64,
        gamma: f64,
        seed: u64,
        /// Maximum budget of each hyperband, in execution order.
        hyperbands: Vec<u64>,
        p: Vec<f64>,
        leftover: u64,
        total_configs: u64,
    },
    Sample {
        config_id: u64,
        provenance: Provenance,
        hyperband: usize,
        bracket: usize,
        config: Map<String, Json>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        true_loss: Option<f64>,
    },
    Eval {
        config_id: u64,
        provenance: Provenance,
        budget: u64,
        /// Absent when the evaluation failed.
        loss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        cumulative_budget: u64,
        hyperband: usize,
        bracket: usize,
        rung: usize,
    },
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("log records always serialize");
        s.push('\n');
        s
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::RunLog {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_log(records: &[LogRecord]) -> String {
    records.iter().map(LogRecord::to_line).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub config_id: u64,
    pub loss: f64,
    pub budget: u64,
    /// Budget consumed when the incumbent was found.
    pub cumulative_budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub cumulative_budget: u64,
    pub incumbent_loss: f64,
    pub incumbent_true_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperbandStats {
    pub max_budget: u64,
    pub configs: u64,
    pub random: u64,
    pub model: u64,
    pub cost: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub schedule: Schedule,
    pub log: Vec<LogRecord>,
    pub incumbent: Option<Incumbent>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub hyperbands: Vec<HyperbandStats>,
    pub consumed_budget: u64,
    /// Surrogate refits, one per completed rung.
    pub ingests: usize,
    pub rungs: usize,
}

impl RunResult {
    pub fn summary(&self) -> Result<RunSummary> {
        summarize_log(&self.log)
    }

    /// Incumbent true loss once `budget` units have been consumed (the
    /// observed loss when the objective has no true loss).
    pub fn incumbent_at(&self, budget: u64) -> Option<f64> {
        incumbent_at(&self.trajectory, budget)
    }
}

pub fn incumbent_at(trajectory: &[TrajectoryPoint], budget: u64) -> Option<f64> {
    let idx = trajectory.partition_point(|p| p.cumulative_budget <= budget);
    let p = trajectory.get(idx.checked_sub(1)?)?;
    Some(p.incumbent_true_loss.unwrap_or(p.incumbent_loss))
}

enum Surrogate {
    Single(Box<TpeState>),
    PerBudget(BTreeMap<u64, TpeState>),
}

impl Surrogate {
    fn model(&self) -> Option<&TpeModel> {
        match self {
            Surrogate::Single(s) => s.model(),
            // Highest budget with a ready density pair.
            Surrogate::PerBudget(m) => m.values().rev().find_map(TpeState::model),
        }
    }

    fn fits(&self) -> usize {
        match self {
            Surrogate::Single(s) => s.fits(),
            Surrogate::PerBudget(m) => m.values().map(TpeState::fits).sum(),
        }
    }

    fn ingest(&mut self, budget: u64, points: Vec<(Vec<f64>, f64)>) {
        match self {
            Surrogate::Single(s) => s.ingest_encoded(points),
            Surrogate::PerBudget(m) => m
                .get_mut(&budget)
                .expect("budget on ladder")
                .ingest_encoded(points),
        }
    }
}

/// Runs one optimisation with `objective` under `rc`.
pub fn run(rc: &RunConfig, objective: &dyn Objective) -> Result<RunResult> {
    let schedule = rc.schedule()?;
    let selection = rc.selection(schedule.len())?;
    let space = objective.space();

    let mut surrogate = match rc.mode {
        Mode::Poca => Surrogate::Single(Box::new(TpeState::new(space.clone(), rc.gamma))),
        Mode::Baseline => Surrogate::PerBudget(
            rc.ladder
                .budgets()
                .iter()
                .map(|&b| (b, TpeState::new(space.clone(), rc.gamma)))
                .collect(),
        ),
    };

    let mut log = vec![LogRecord::Schedule {
        mode: rc.mode,
        total_budget: rc.total_budget,
        b_min: rc.ladder.b_min(),
        b_max: rc.ladder.b_max(),
        eta: rc.ladder.eta(),
        gamma: rc.gamma,
        seed: rc.seed,
        hyperbands: schedule.hyperbands.iter().map(|h| h.max_budget).collect(),
        p: schedule.p.clone(),
        leftover: schedule.leftover,
        total_configs: schedule.total_configs(),
    }];

    let mut sampling = rng::stream(rng::derive(rc.seed, &[rng::tag::SAMPLING]));
    let eval_seed = rng::derive(rc.seed, &[rng::tag::EVALUATION]);
    let evaluator = |c: &Candidate, budget: u64| {
        objective.evaluate(&c.config, budget, rng::derive(eval_seed, &[c.id, budget]))
    };

    let mut provenance: Vec<Provenance> = Vec::new();
    let mut true_losses: Vec<Option<f64>> = Vec::new();
    let mut incumbent: Option<Incumbent> = None;
    let mut trajectory = Vec::new();
    let mut stats = Vec::with_capacity(schedule.len());
    let mut consumed = 0u64;
    let mut rungs = 0usize;

    for (k, hb) in schedule.hyperbands.iter().enumerate() {
        let mut hs = HyperbandStats {
            max_budget: hb.max_budget,
            ..Default::default()
        };
        for bracket in &hb.brackets {
            let mut fresh = Vec::with_capacity(bracket.n0 as usize);
            for _ in 0..bracket.n0 {
                let (config, origin) =
                    select(&selection, k, surrogate.model(), space, &mut sampling);
                let id = provenance.len() as u64;
                let true_loss = objective.true_loss(&config);
                provenance.push(origin);
                true_losses.push(true_loss);
                match origin {
                    Provenance::Random => hs.random += 1,
                    Provenance::Model => hs.model += 1,
                }
                log.push(LogRecord::Sample {
                    config_id: id,
                    provenance: origin,
                    hyperband: k,
                    bracket: bracket.s,
                    config: space.to_json_map(&config),
                    true_loss,
                });
                fresh.push(Candidate { id, config });
            }
            hs.configs += bracket.n0;

            let mut supply = fresh.into_iter();
            let sink = |o: &RungOutcome<'_>| {
                let mut points = Vec::with_capacity(o.trials.len());
                for (t, member) in o.trials.iter().zip(o.members) {
                    consumed += t.budget;
                    hs.cost += t.budget;
                    let finite = !t.failed();
                    if !finite {
                        hs.failed += 1;
                    }
                    log.push(LogRecord::Eval {
                        config_id: t.id,
                        provenance: provenance[t.id as usize],
                        budget: t.budget,
                        loss: finite.then_some(t.loss),
                        error: t.error.as_ref().map(|e| e.to_string()),
                        cumulative_budget: consumed,
                        hyperband: k,
                        bracket: bracket.s,
                        rung: o.rung,
                    });
                    if finite {
                        if incumbent.as_ref().is_none_or(|inc| t.loss < inc.loss) {
                            incumbent = Some(Incumbent {
                                config_id: t.id,
                                loss: t.loss,
                                budget: t.budget,
                                cumulative_budget: consumed,
                                true_loss: true_losses[t.id as usize],
                            });
                        }
                        points.push((space.encode_unchecked(&member.config), t.loss));
                    }
                    if let Some(inc) = &incumbent {
                        trajectory.push(TrajectoryPoint {
                            cumulative_budget: consumed,
                            incumbent_loss: inc.loss,
                            incumbent_true_loss: inc.true_loss,
                        });
                    }
                }
                surrogate.ingest(o.budget, points);
                rungs += 1;
            };
            run_bracket(
                bracket,
                || supply.next().expect("pre-sampled candidates"),
                &evaluator,
                rc.jobs,
                sink,
            );
        }
        stats.push(hs);
    }
    debug_assert!(consumed <= rc.total_budget);
    let ingests = surrogate.fits();

    Ok(RunResult {
        schedule,
        log,
        incumbent,
        trajectory,
        hyperbands: stats,
        consumed_budget: consumed,
        ingests,
        rungs,
    })
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    /// True loss of the final incumbent, or its observed loss when the
    /// objective has no true loss.
    pub final_loss: f64,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl RepOutcome {
    pub fn incumbent_at(&self, budget: u64) -> Option<f64> {
        incumbent_at(&self.trajectory, budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStat {
    pub cumulative_budget: u64,
    pub mean: f64,
    pub lcb: f64,
    pub ucb: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub mode: Mode,
    pub reps: Vec<RepOutcome>,
    pub row: SummaryRow,
    pub trajectory: Vec<TrajectoryStat>,
}

impl ReplicationSummary {
    /// Mean incumbent loss across replications at `budget`.
    pub fn mean_at(&self, budget: u64) -> Option<f64> {
        let vals: Vec<f64> = self
            .reps
            .iter()
            .filter_map(|r| r.incumbent_at(budget))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Number of evenly spaced points in the mean trajectory.
pub const TRAJECTORY_POINTS: u64 = 100;

/// Runs `reps` independent replications, `jobs` at a time. Replication `r`
/// uses seed `derive(rc.seed, [REPLICATION, r])`.
pub fn replicate(
    rc: &RunConfig,
    objective: &dyn Objective,
    reps: usize,
    jobs: usize,
) -> Result<ReplicationSummary> {
    if reps < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 replications for a standard error".into(),
        ));
    }
    rc.schedule()?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RepOutcome>>>> =
        Mutex::new((0..reps).map(|_| None).collect());
    let work = || loop {
        let r = next.fetch_add(1, Ordering::SeqCst);
        if r >= reps {
            break;
        }
        let seed = rng::derive(rc.seed, &[rng::tag::REPLICATION, r as u64]);
        let rep_rc = RunConfig {
            seed,
            jobs: 1,
            ..rc.clone()
        };
        let outcome = run(&rep_rc, objective).and_then(|res| {
            let inc = res.incumbent.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("replication {r} produced no finite loss"))
            })?;
            Ok(RepOutcome {
                rep: r,
                seed,
                final_loss: inc.true_loss.unwrap_or(inc.loss),
                trajectory: res.trajectory,
            })
        });
        slots.lock().unwrap()[r] = Some(outcome);
    };
    let jobs = jobs.clamp(1, reps);
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(work);
            }
        });
    }
    let outcomes: Vec<RepOutcome> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|o| o.expect("every replication ran"))
        .collect::<Result<_>>()?;

    let finals: Vec<f64> = outcomes.iter().map(|o| o.final_loss).collect();
    let (mean, se) = mean_and_se(&finals)?;
    let row = SummaryRow::new(rc.mode.name(), mean, se);

    let step = (rc.total_budget / TRAJECTORY_POINTS).max(1);
    let trajectory = (1..=TRAJECTORY_POINTS)
        .map(|i| {
            if i == TRAJECTORY_POINTS {
                rc.total_budget
            } else {
                i * step
            }
        })
        .filter_map(|b| {
            let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.incumbent_at(b)).collect();
            let n = vals.len();
            match n {
                0 => None,
                1 => Some(TrajectoryStat {
                    cumulative_budget: b,
                    mean: vals[0],
                    lcb: vals[0],
                    ucb: vals[0],
                    n,
                }),
                _ => {
                    let (m, se) = mean_and_se(&vals).ok()?;
                    let r = SummaryRow::new("", m, se);
                    Some(TrajectoryStat {
                        cumulative_budget: b,
                        mean: m,
                        lcb: r.lcb,
                        ucb: r.ucb,
                        n,
                    })
                }
            }
        })
        .collect();

    Ok(ReplicationSummary {
        mode: rc.mode,
        reps: outcomes,
        row,
        trajectory,
    })
}
