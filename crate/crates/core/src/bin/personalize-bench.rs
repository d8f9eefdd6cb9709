use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rnnt_personalize::harness::acceptance::evaluate_all;
use rnnt_personalize::harness::{run, train_base, BaseConfig, Bench, ExperimentConfig, ExperimentKind, ExperimentSpec};

// the system allocator hands large tape buffers back to the kernel after
// every step, which makes big batches pay for page faults
#[global_allocator]
static ALLOCATOR: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "personalize-bench", about = "Synthetic RNN-T personalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the base model and write checkpoint, Fisher, anchors and report.
    TrainBase {
        /// JSON overrides of the base configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/base")]
        out: PathBuf,
    },
    /// Run experiments against a base checkpoint.
    Run {
        /// Experiment name, or `all`.
        #[arg(long, default_value = "all")]
        experiment: String,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate every acceptance criterion; exits non-zero if one fails.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Comma-separated run seeds.
    #[arg(long, alias = "seed", value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// JSON overrides of the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value = "runs/base/base.ckpt")]
    base_checkpoint: PathBuf,
}

impl Common {
    fn experiment_config(&self) -> Result<ExperimentConfig> {
        Ok(match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        })
    }
}

fn train(config: Option<&Path>, out: &Path) -> Result<()> {
    let config: BaseConfig = match config {
        Some(p) => serde_json::from_slice(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => BaseConfig::default(),
    };
    let base = train_base(&config)?;
    let path = base.save(out)?;
    eprintln!(
        "base test WER {:.4} after {} epochs; wrote {}",
        base.report.base_test.wer,
        base.report.epoch_losses.len(),
        path.display()
    );
    Ok(())
}

fn run_experiments(experiment: &str, common: &Common) -> Result<bool> {
    let kinds: Vec<ExperimentKind> =
        if experiment == "all" { ExperimentKind::ALL.to_vec() } else { vec![experiment.parse()?] };
    let config = common.experiment_config()?;
    let bench = Bench::load(&common.base_checkpoint)?;
    let mut all_passed = true;
    for kind in kinds {
        let spec = ExperimentSpec { experiment: kind, seeds: common.seeds.clone(), config: config.clone() };
        let outcome = run(&bench, &spec).with_context(|| format!("running {kind}"))?;
        let path = outcome.write(&common.out)?;
        for c in &outcome.checks {
            eprintln!("{kind}: [{}] {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
        }
        eprintln!("{kind}: wrote {}", path.display());
        all_passed &= outcome.passed();
    }
    Ok(all_passed)
}

fn evaluate(common: &Common) -> Result<bool> {
    let config = common.experiment_config()?;
    let scratch = common.out.join("rebuilt-base");
    let results = evaluate_all(&common.base_checkpoint, &config, &common.seeds, &scratch, |r| println!("{r}"))?;
    std::fs::create_dir_all(&common.out)?;
    std::fs::write(common.out.join("acceptance.json"), serde_json::to_vec_pretty(&results)?)?;
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    Ok(passed == results.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::TrainBase { config, out } => train(config.as_deref(), out).map(|_| true),
        Command::Run { experiment, common } => run_experiments(experiment, common),
        Command::Evaluate { common } => evaluate(common),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use rnnt_personalize::harness::MODEL_FILE;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["personalize-bench", "run", "--experiment", "ewc_ablation", "--seeds", "3,4"]).unwrap();
        match cli.command {
            Command::Run { experiment, common } => {
                assert_eq!(experiment, "ewc_ablation");
                assert_eq!(common.seeds, vec![3, 4]);
                assert_eq!(common.base_checkpoint, Path::new("runs/base").join(MODEL_FILE));
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
