//! Summaries derived from run logs, and table output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::{Incumbent, LogRecord, Mode, ReplicationSummary, TrajectoryPoint};
use crate::selection::Provenance;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub lcb: f64,
    pub ucb: f64,
}

impl SummaryRow {
    pub fn new(name: &str, mean: f64, std_error: f64) -> Self {
        Self {
            name: name.to_string(),
            mean,
            std_error,
            lcb: mean - Z_95 * std_error,
            ucb: mean + Z_95 * std_error,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,mean_loss,std_error,lcb,ucb\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.name, r.mean, r.std_error, r.lcb, r.ucb
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<10} {:>12} {:>11} {:>12} {:>12}\n",
            "Algorithm", "Mean Loss", "Std. Error", "LCB", "UCB"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>12.3} {:>11.3} {:>12.3} {:>12.3}",
                r.name, r.mean, r.std_error, r.lcb, r.ucb
            );
        }
        s
    }
}

/// Sample mean and standard error of the mean (n-1 denominator).
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "standard error needs at least 2 values".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok((mean, (var / n as f64).sqrt()))
}

/// Everything the CLI reports about a single run, recomputable from its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub total_budget: u64,
    pub scheduled_hyperbands: usize,
    pub scheduled_configs: u64,
    pub leftover: u64,
    pub consumed_budget: u64,
    pub configs: u64,
    pub random_configs: u64,
    pub model_configs: u64,
    pub evaluations: u64,
    pub failed_evaluations: u64,
    pub incumbent: Option<Incumbent>,
}

pub fn summarize_log(records: &[LogRecord]) -> Result<RunSummary> {
    let bad = |line: usize, message: &str| Error::RunLog {
        line,
        message: message.into(),
    };
    let Some(LogRecord::Schedule {
        mode,
        total_budget,
        seed,
        hyperbands,
        leftover,
        total_configs,
        ..
    }) = records.first()
    else {
        return Err(bad(1, "log must start with a schedule record"));
    };
    let mut s = RunSummary {
        mode: *mode,
        seed: *seed,
        total_budget: *total_budget,
        scheduled_hyperbands: hyperbands.len(),
        scheduled_configs: *total_configs,
        leftover: *leftover,
        consumed_budget: 0,
        configs: 0,
        random_configs: 0,
        model_configs: 0,
        evaluations: 0,
        failed_evaluations: 0,
        incumbent: None,
    };
    let mut true_losses: Vec<Option<f64>> = Vec::new();
    for (i, r) in records.iter().enumerate().skip(1) {
        match r {
            LogRecord::Schedule { .. } => return Err(bad(i + 1, "duplicate schedule record")),
            LogRecord::Sample {
                config_id,
                provenance,
                true_loss,
                ..
            } => {
                if *config_id != true_losses.len() as u64 {
                    return Err(bad(i + 1, "config ids must be sequential"));
                }
                true_losses.push(*true_loss);
                s.configs += 1;
                match provenance {
                    Provenance::Random => s.random_configs += 1,
                    Provenance::Model => s.model_configs += 1,
                }
            }
            LogRecord::Eval {
                config_id,
                budget,
                loss,
                cumulative_budget,
                ..
            } => {
                let Some(true_loss) = true_losses.get(*config_id as usize) else {
                    return Err(bad(i + 1, "evaluation of an unknown config"));
                };
                s.evaluations += 1;
                s.consumed_budget += budget;
                if *cumulative_budget != s.consumed_budget {
                    return Err(bad(
                        i + 1,
                        "cumulative budget does not match evaluation budgets",
                    ));
                }
                match loss {
                    None => s.failed_evaluations += 1,
                    Some(l) => {
                        if s.incumbent.as_ref().is_none_or(|inc| *l < inc.loss) {
                            s.incumbent = Some(Incumbent {
                                config_id: *config_id,
                                loss: *l,
                                budget: *budget,
                                cumulative_budget: *cumulative_budget,
                                true_loss: *true_loss,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(s)
}

/// Incumbent trajectory re-derived from a log, one point per evaluation
/// once a finite loss exists.
pub fn trajectory_from_log(records: &[LogRecord]) -> Vec<TrajectoryPoint> {
    let mut true_losses = Vec::new();
    let mut best: Option<(f64, Option<f64>)> = None;
    let mut out = Vec::new();
    for r in records {
        match r {
            LogRecord::Sample { true_loss, .. } => true_losses.push(*true_loss),
            LogRecord::Eval {
                config_id,
                loss,
                cumulative_budget,
                ..
            } => {
                if let Some(l) = loss {
                    if best.is_none_or(|(b, _)| *l < b) {
                        best = Some((*l, true_losses.get(*config_id as usize).copied().flatten()));
                    }
                }
                if let Some((l, t)) = best {
                    out.push(TrajectoryPoint {
                        cumulative_budget: *cumulative_budget,
                        incumbent_loss: l,
                        incumbent_true_loss: t,
                    });
                }
            }
            LogRecord::Schedule { .. } => {}
        }
    }
    out
}

pub fn run_trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut s = String::from("cumulative_budget,incumbent_loss,incumbent_true_loss\n");
    for p in points {
        let t = p
            .incumbent_true_loss
            .map(|t| t.to_string())
            .unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", p.cumulative_budget, p.incumbent_loss, t);
    }
    s
}

/// Mean incumbent trajectory with pointwise 95% bounds, one block per
/// algorithm.
pub fn bench_trajectory_csv(summaries: &[&ReplicationSummary]) -> String {
    let mut s = String::from("algorithm,cumulative_budget,mean_incumbent_loss,lcb,ucb,n\n");
    for sum in summaries {
        for t in &sum.trajectory {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                sum.row.name, t.cumulative_budget, t.mean, t.lcb, t.ucb, t.n
            );
        }
    }
    s
}
