use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use poca::allocator::Schedule;
use poca::bracket::FidelityLadder;
use poca::objective::{CountingOnes, ExternalObjective, ExternalOptions, Objective};
use poca::orchestrator::{parse_log, replicate, run, write_log, Mode, RunConfig};
use poca::report::{self, SummaryTable};
use poca::space::ConfigSpace;
use poca::{Error, Result};

#[derive(Parser)]
#[command(
    name = "poca",
    version,
    about = "Budget-aware multi-fidelity hyperparameter optimisation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the hyperband schedule for a total budget.
    Schedule {
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, value_enum, default_value = "poca")]
        mode: ModeArg,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run one optimisation and write its log, summary and trajectory.
    Run {
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, value_enum, default_value = "poca")]
        mode: ModeArg,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        json: bool,
    },
    /// Replicate both algorithms and write a summary table.
    Bench {
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Also write per-replication run logs.
        #[arg(long)]
        keep_logs: bool,
        #[arg(long)]
        json: bool,
    },
    /// Re-derive the summary and trajectory of a run from its log.
    Report {
        /// Run log, or a run output directory containing run_log.jsonl.
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Clone)]
struct BudgetArgs {
    /// Total budget.
    #[arg(long = "T")]
    total: u64,
    #[arg(long)]
    bmin: u64,
    #[arg(long)]
    bmax: u64,
    /// Promotion proportion, e.g. 0.5 or 1/3.
    #[arg(long, value_parser = parse_eta)]
    eta: f64,
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long, default_value_t = poca::tpe::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parallel evaluations per rung (run) or parallel replications (bench).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value = "counting-ones")]
    objective: ObjectiveArg,
    /// Worker command for the external objective, run through `sh -c`.
    #[arg(long)]
    worker_cmd: Option<String>,
    /// Configuration-space document for the external objective.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Per-evaluation timeout for the external objective, in seconds.
    #[arg(long, default_value_t = 3600)]
    timeout: u64,
    #[arg(long, default_value_t = 8)]
    n_cat: usize,
    #[arg(long, default_value_t = 8)]
    n_cont: usize,
    #[arg(long, default_value = "poca-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Poca,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Poca => Mode::Poca,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    CountingOnes,
    External,
}

fn parse_eta(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = d.trim().parse().map_err(|e| format!("{e}"))?;
            n / d
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    Ok(v)
}

impl BudgetArgs {
    fn ladder(&self) -> Result<FidelityLadder> {
        FidelityLadder::new(self.bmin, self.bmax, self.eta)
    }
}

impl CommonArgs {
    fn objective(&self, jobs: usize) -> Result<Box<dyn Objective>> {
        match self.objective {
            ObjectiveArg::CountingOnes => Ok(Box::new(CountingOnes::new(self.n_cat, self.n_cont)?)),
            ObjectiveArg::External => {
                let cmd = self.worker_cmd.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("--objective external needs --worker-cmd".into())
                })?;
                let path = self.space.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("--objective external needs --space".into())
                })?;
                let space = ConfigSpace::from_json_str(&fs::read_to_string(path)?)?;
                let options = ExternalOptions {
                    timeout: Duration::from_secs(self.timeout),
                    max_in_flight: jobs.max(1),
                };
                Ok(Box::new(ExternalObjective::spawn(cmd, space, options)?))
            }
        }
    }
}

fn schedule_json(s: &Schedule) -> serde_json::Value {
    json!({
        "total_budget": s.total_budget,
        "hyperbands": s.hyperbands.iter().zip(&s.p).map(|(h, p)| json!({
            "max_budget": h.max_budget,
            "brackets": h.brackets.iter().map(|b| json!({
                "s": b.s,
                "rungs": b.rungs.iter().map(|r| [r.count, r.budget]).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "configs": h.total_configs,
            "cost": h.total_cost,
            "p": p,
        })).collect::<Vec<_>>(),
        "counts": s.counts().iter().map(|(b, n)| json!({"max_budget": b, "count": n})).collect::<Vec<_>>(),
        "total_hyperbands": s.len(),
        "total_configs": s.total_configs(),
        "total_cost": s.total_cost(),
        "leftover": s.leftover,
    })
}

fn schedule_text(s: &Schedule) -> String {
    let mut out = format!(
        "{:>4} {:>10} {:>8} {:>8} {:>8} {:>6}  rungs\n",
        "#", "max_budget", "brackets", "configs", "cost", "p"
    );
    for (k, (h, p)) in s.hyperbands.iter().zip(&s.p).enumerate() {
        let sizes: Vec<String> = h
            .brackets
            .iter()
            .map(|b| format!("{}x{}", b.n0, b.r0))
            .collect();
        out.push_str(&format!(
            "{:>4} {:>10} {:>8} {:>8} {:>8} {:>6.3}  {}\n",
            k,
            h.max_budget,
            h.n_brackets(),
            h.total_configs,
            h.total_cost,
            p,
            sizes.join(" ")
        ));
    }
    let counts: Vec<String> = s
        .counts()
        .iter()
        .map(|(b, n)| format!("{n}x max-{b}"))
        .collect();
    out.push_str(&format!(
        "hyperbands: {} ({})\nconfigurations: {}\ncost: {}\nleftover: {}\n",
        s.len(),
        counts.join(", "),
        s.total_configs(),
        s.total_cost(),
        s.leftover
    ));
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule { budget, mode, json } => {
            let rc = RunConfig::new(mode.into(), budget.total, budget.ladder()?, 0);
            let s = rc.schedule()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&schedule_json(&s))?);
            } else {
                print!("{}", schedule_text(&s));
            }
        }
        Command::Run {
            budget,
            mode,
            common,
            json,
        } => {
            let objective = common.objective(common.jobs)?;
            let rc = RunConfig {
                gamma: common.gamma,
                jobs: common.jobs,
                ..RunConfig::new(mode.into(), budget.total, budget.ladder()?, common.seed)
            };
            let result = run(&rc, objective.as_ref())?;
            let summary = result.summary()?;
            write(&common.out, "run_log.jsonl", &write_log(&result.log))?;
            write(
                &common.out,
                "summary.json",
                &serde_json::to_string_pretty(&summary)?,
            )?;
            write(
                &common.out,
                "trajectory.csv",
                &report::run_trajectory_csv(&result.trajectory),
            )?;
            print_run_summary(&summary, json)?;
        }
        Command::Bench {
            budget,
            common,
            reps,
            keep_logs,
            json,
        } => {
            let objective = common.objective(1)?;
            let ladder = budget.ladder()?;
            let mut table = SummaryTable::default();
            let mut summaries = Vec::new();
            for mode in [Mode::Poca, Mode::Baseline] {
                let rc = RunConfig {
                    gamma: common.gamma,
                    ..RunConfig::new(mode, budget.total, ladder.clone(), common.seed)
                };
                let sum = replicate(&rc, objective.as_ref(), reps, common.jobs)?;
                if keep_logs {
                    let dir = common.out.join("logs");
                    for r in &sum.reps {
                        let rep_rc = RunConfig {
                            seed: r.seed,
                            ..rc.clone()
                        };
                        let res = run(&rep_rc, objective.as_ref())?;
                        write(
                            &dir,
                            &format!("{}_{:03}.jsonl", mode.name().to_lowercase(), r.rep),
                            &write_log(&res.log),
                        )?;
                    }
                }
                table.rows.push(sum.row.clone());
                summaries.push(sum);
            }
            let refs: Vec<_> = summaries.iter().collect();
            write(&common.out, "summary.csv", &table.to_csv())?;
            write(
                &common.out,
                "trajectory.csv",
                &report::bench_trajectory_csv(&refs),
            )?;
            let finals: Vec<_> = summaries
                .iter()
                .map(|s| json!({"algorithm": s.row.name, "final_losses": s.reps.iter().map(|r| r.final_loss).collect::<Vec<_>>()}))
                .collect();
            write(
                &common.out,
                "replications.json",
                &serde_json::to_string_pretty(&finals)?,
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.to_text());
            }
        }
        Command::Report { path, json } => {
            let file = if path.is_dir() {
                path.join("run_log.jsonl")
            } else {
                path
            };
            let records = parse_log(&fs::read_to_string(&file)?)?;
            let summary = report::summarize_log(&records)?;
            if let Some(dir) = file.parent() {
                let derived = report::run_trajectory_csv(&report::trajectory_from_log(&records));
                write(dir, "trajectory.report.csv", &derived)?;
            }
            print_run_summary(&summary, json)?;
        }
    }
    Ok(())
}

fn print_run_summary(s: &report::RunSummary, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(s)?);
        return Ok(());
    }
    println!("mode: {}", s.mode.name());
    println!(
        "consumed budget: {} of {} (leftover {})",
        s.consumed_budget, s.total_budget, s.leftover
    );
    println!(
        "configurations: {} ({} random, {} model), evaluations: {} ({} failed)",
        s.configs, s.random_configs, s.model_configs, s.evaluations, s.failed_evaluations
    );
    match &s.incumbent {
        Some(inc) => {
            print!(
                "incumbent: config {} loss {} at budget {}",
                inc.config_id, inc.loss, inc.budget
            );
            if let Some(t) = inc.true_loss {
                print!(" (true loss {t})");
            }
            println!(", found after {} units", inc.cumulative_budget);
        }
        None => println!("incumbent: none"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
