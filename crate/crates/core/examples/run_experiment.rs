//! Runs one named experiment against a base checkpoint with a shortened
//! recipe and prints its directional checks and median summary.
//!
//! Usage: run_experiment [EXPERIMENT] [BASE_CHECKPOINT]

use rnnt_personalize::harness::{run, Bench, ExperimentConfig, ExperimentKind, ExperimentSpec};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ExperimentKind = args.next().as_deref().unwrap_or("tts_mismatch").parse()?;
    let checkpoint = args.next().unwrap_or_else(|| "runs/base/base.ckpt".into());
    let bench = Bench::load(&checkpoint)?;

    let mut config = ExperimentConfig::default();
    config.personalize.epochs = 5;
    let spec = ExperimentSpec { experiment: kind, seeds: vec![0], config };
    let outcome = run(&bench, &spec)?;
    for check in &outcome.checks {
        println!("[{}] {}: {}", if check.passed { "ok" } else { "FAILED" }, check.name, check.detail);
    }
    println!("{}", serde_json::to_string_pretty(&outcome.report["summary"])?);
    Ok(())
}
