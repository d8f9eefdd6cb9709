//! Experiment plumbing: base-model training, the personalization studies
//! and the acceptance evaluator. Every report is a JSON document carrying
//! its full resolved configuration; wall-clock figures are written to a
//! separate timing file so reports stay byte-reproducible.

pub mod acceptance;
mod base;
mod experiments;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use base::{
    base_recipe, base_test_set, train_base, BaseArtifacts, BaseConfig, BaseReport, ANCHORS_FILE, FISHER_FILE, MODEL_FILE,
    REPORT_FILE, TIMING_FILE,
};
pub use experiments::*;

use crate::error::{Error, Result};
use crate::model::ParamGroup;
use crate::sim::SynthWorld;
use crate::trainer::{EvalSet, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LayerSelection,
    EwcAblation,
    TtsMismatch,
    SupervisionLevels,
    BiasingGrid,
    ThroughputBenchmark,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::LayerSelection,
        ExperimentKind::EwcAblation,
        ExperimentKind::TtsMismatch,
        ExperimentKind::SupervisionLevels,
        ExperimentKind::BiasingGrid,
        ExperimentKind::ThroughputBenchmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LayerSelection => "layer_selection",
            ExperimentKind::EwcAblation => "ewc_ablation",
            ExperimentKind::TtsMismatch => "tts_mismatch",
            ExperimentKind::SupervisionLevels => "supervision_levels",
            ExperimentKind::BiasingGrid => "biasing_grid",
            ExperimentKind::ThroughputBenchmark => "throughput_benchmark",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Knobs shared by the experiments. Loaded from a JSON file whose fields
/// override these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Fine-tuning recipe; its seed is replaced by the run seed.
    pub personalize: TrainConfig,
    /// Group trained by the supervision studies.
    pub ladder_group: ParamGroup,
    /// Early-stopping patience of the supervision studies. Isolated-name
    /// training data raises sentence WER before name recall improves, so
    /// the default runs every epoch.
    pub ladder_patience: Option<usize>,
    pub beam_width: usize,
    /// Non-zero EWC weights compared against λ = 0.
    pub lambdas: Vec<f64>,
    /// Per-grapheme bias boosts compared against unbiased decoding.
    pub boosts: Vec<f64>,
    /// Extra credit for completing a name, as a multiple of the boost.
    pub final_boost_ratio: f64,
    /// Boost used to produce the biased-unsupervised transcripts.
    pub condition_boost: f64,
    pub tts_mismatches: Vec<f64>,
    pub throughput_batch_sizes: Vec<usize>,
    pub throughput_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            personalize: TrainConfig::default(),
            ladder_group: ParamGroup::All,
            ladder_patience: None,
            beam_width: 8,
            lambdas: vec![1e2, 1e4, 1e6],
            boosts: vec![0.5, 1.0, 2.0, 4.0],
            final_boost_ratio: 2.0,
            condition_boost: 2.0,
            tts_mismatches: vec![0.0, 0.5, 1.0, 2.0],
            throughput_batch_sizes: vec![1, 5, 10, 20],
            throughput_repeats: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.personalize.validate()?;
        if self.beam_width == 0 || self.throughput_repeats == 0 {
            return Err(Error::InvalidArgument("beam width and throughput repeats must be positive".into()));
        }
        if self.lambdas.iter().chain(&self.boosts).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("grid values must be positive".into()));
        }
        if self.throughput_batch_sizes.contains(&0) {
            return Err(Error::InvalidArgument("batch sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: Self = serde_json::from_slice(&fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    /// The fine-tuning recipe for one run seed.
    pub fn recipe(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.personalize.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    /// Each seed selects one simulated user and the fine-tuning seed.
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind, seeds: Vec<u64>) -> Self {
        Self { experiment, seeds, config: ExperimentConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        self.config.validate()
    }
}

/// One directional property evaluated on a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// The common envelope of every experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<R, S> {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub base: BaseConfig,
    pub runs: Vec<R>,
    /// Medians over seeds.
    pub summary: S,
    pub checks: Vec<Check>,
}

/// A finished experiment, ready to be written out.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub experiment: ExperimentKind,
    pub report: serde_json::Value,
    pub timing: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes `<name>.json` and `<name>.timing.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.experiment));
        fs::write(&path, serde_json::to_vec_pretty(&self.report)?)?;
        fs::write(dir.join(format!("{}.timing.json", self.experiment)), serde_json::to_vec_pretty(&self.timing)?)?;
        Ok(path)
    }
}

/// A loaded base model with its world and rendered base test set.
#[derive(Clone, Debug)]
pub struct Bench {
    pub world: SynthWorld,
    pub base: BaseArtifacts,
    pub base_test: EvalSet,
}

impl Bench {
    pub fn new(base: BaseArtifacts) -> Result<Self> {
        let world = base.world()?;
        let base_test = base_test_set(&world)?;
        Ok(Self { world, base, base_test })
    }

    pub fn load(checkpoint: impl AsRef<Path>) -> Result<Self> {
        Self::new(BaseArtifacts::load(checkpoint)?)
    }
}

/// Runs one experiment for every seed of `spec`.
pub fn run(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    match spec.experiment {
        ExperimentKind::LayerSelection => layer_selection(bench, spec),
        ExperimentKind::EwcAblation => ewc_ablation(bench, spec),
        ExperimentKind::TtsMismatch => tts_mismatch(bench, spec),
        ExperimentKind::SupervisionLevels => supervision_levels(bench, spec),
        ExperimentKind::BiasingGrid => biasing_grid(bench, spec),
        ExperimentKind::ThroughputBenchmark => throughput_benchmark(bench, spec),
    }
}

/// Median of `values`; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
