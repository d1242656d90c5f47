//! Counting Ones comparison of both modes.
//!
//! cargo run --release -p poca --example counting_ones -- [reps] [seed]

use std::time::Instant;

use poca::bracket::FidelityLadder;
use poca::objective::CountingOnes;
use poca::orchestrator::{replicate, Mode, RunConfig};
use poca::report::SummaryTable;

fn main() -> poca::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let objective = CountingOnes::new(8, 8)?;
    let ladder = FidelityLadder::new(9, 729, 1.0 / 3.0)?;
    let mut table = SummaryTable::default();
    for mode in [Mode::Poca, Mode::Baseline] {
        let started = Instant::now();
        let rc = RunConfig::new(mode, 153_100, ladder.clone(), seed);
        let summary = replicate(&rc, &objective, reps, 1)?;
        println!(
            "{}: {:.1}s, mean at 40000 = {:.3}",
            mode.name(),
            started.elapsed().as_secs_f64(),
            summary.mean_at(40_000).unwrap_or(f64::NAN)
        );
        table.rows.push(summary.row);
    }
    print!("{}", table.to_text());
    Ok(())
}
