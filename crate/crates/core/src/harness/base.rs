use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ewc::{estimate_fisher, AnchorParameters, FisherEstimate};
use crate::loss::LossInput;
use crate::metrics::EvaluationReport;
use crate::model::{load_archive, save_archive, ModelConfig, TransducerModel};
use crate::sim::{RenderMode, SynthWorld, WorldConfig};
use crate::text;
use crate::trainer::{train_resampled, EvalSet, TrainConfig};

pub const MODEL_FILE: &str = "base.ckpt";
pub const FISHER_FILE: &str = "fisher.ckpt";
pub const ANCHORS_FILE: &str = "anchors.ckpt";
pub const REPORT_FILE: &str = "base_report.json";
pub const TIMING_FILE: &str = "base_timing.json";

/// Everything that determines a base model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseConfig {
    pub world: WorldConfig,
    pub world_seed: u64,
    pub model: ModelConfig,
    pub model_seed: u64,
    pub train: TrainConfig,
    /// Base-task utterances averaged into the Fisher estimate.
    pub fisher_samples: usize,
    /// Training fails unless base-test WER ends at or below this.
    pub target_wer: f64,
    /// Users whose test sets are decoded as a name-recall probe.
    pub probe_users: usize,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            world_seed: 1,
            model: ModelConfig::default(),
            model_seed: 1,
            train: base_recipe(),
            fisher_samples: 500,
            target_wer: 0.15,
            probe_users: 3,
        }
    }
}

/// Momentum SGD with two step decays. Every epoch sees a fresh
/// rendering of the base sentences, which keeps the small model from
/// memorizing one noise draw.
pub fn base_recipe() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        batch_size: 8,
        epochs: 140,
        patience: None,
        seed: 1,
        clip_norm: Some(5.0),
        shuffle: true,
        lr_steps: vec![(84, 0.2), (119, 0.04)],
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseReport {
    pub config: BaseConfig,
    pub parameters: usize,
    pub epoch_losses: Vec<f64>,
    pub base_test: EvaluationReport,
    /// Test sets of the first users, scored with their names as keywords.
    pub user_probe: Vec<EvaluationReport>,
    pub fisher: crate::ewc::FisherSummary,
}

/// A trained base model with its EWC snapshot.
#[derive(Clone, Debug)]
pub struct BaseArtifacts {
    pub model: TransducerModel,
    pub fisher: FisherEstimate,
    pub anchors: AnchorParameters,
    pub report: BaseReport,
    pub epoch_seconds: Vec<f64>,
}

/// Renders the base test split in canonical form.
pub fn base_test_set(world: &SynthWorld) -> Result<EvalSet> {
    let mut set = EvalSet::default();
    for u in &world.base_test {
        set.push(world.render(u, None)?, &u.transcript);
    }
    Ok(set)
}

/// Trains the base model on the synthetic base corpus, then estimates the
/// Fisher diagonal and snapshots the anchors.
pub fn train_base(config: &BaseConfig) -> Result<BaseArtifacts> {
    let world = SynthWorld::new(config.world.clone(), config.world_seed)?;
    let mut model = TransducerModel::new(config.model.clone(), config.model_seed)?;
    let labels: Vec<Vec<usize>> = world.base_train.iter().map(|u| text::to_labels(&u.transcript)).collect::<Result<_>>()?;
    let (losses, seconds) = train_resampled(
        &mut model,
        &config.train,
        |epoch| {
            world
                .base_train
                .iter()
                .zip(&labels)
                .map(|(u, l)| {
                    let speaker = world.speaker(&u.speaker).expect("base speaker");
                    let salt = format!("{}#{epoch}", u.id);
                    Ok((world.synth_features(&u.transcript, speaker, RenderMode::UserVoice, &salt)?, l.clone()))
                })
                .collect()
        },
        |_, _, _| true,
    )?;
    let base_test = base_test_set(&world)?.evaluate(&model, &BTreeSet::new())?;
    if !(base_test.wer <= config.target_wer) {
        return Err(Error::NotConverged { wer: base_test.wer, target: config.target_wer });
    }
    let mut user_probe = Vec::with_capacity(config.probe_users);
    for i in 0..config.probe_users {
        let user = world.user(i);
        let mut set = EvalSet::default();
        for u in &user.test {
            set.push(world.render(u, Some(&user))?, &u.transcript);
        }
        user_probe.push(set.evaluate(&model, &user.names.iter().cloned().collect())?);
    }
    let features: Vec<_> = world.base_train.iter().map(|u| world.render(u, None)).collect::<Result<_>>()?;
    let inputs: Vec<LossInput<'_>> =
        features.iter().zip(&labels).map(|(f, t)| LossInput { features: f, targets: t }).collect();
    let fisher = estimate_fisher(&model, &inputs, config.fisher_samples)?;
    let anchors = AnchorParameters::from_model(&model);
    let report = BaseReport {
        config: config.clone(),
        parameters: model.params().numel(),
        epoch_losses: losses,
        base_test,
        user_probe,
        fisher: fisher.summary(),
    };
    Ok(BaseArtifacts { model, fisher, anchors, report, epoch_seconds: seconds })
}

impl BaseArtifacts {
    /// Writes checkpoint, Fisher, anchors and report into `dir`. Wall-clock
    /// timings go to a separate file so the rest stays byte-reproducible.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut model = self.model.to_archive()?;
        model.metadata = serde_json::json!({ "model": model.metadata, "base": self.report.config });
        save_archive(&model, dir.join(MODEL_FILE))?;
        save_archive(&self.fisher.to_archive(), dir.join(FISHER_FILE))?;
        save_archive(&self.anchors.to_archive(), dir.join(ANCHORS_FILE))?;
        fs::write(dir.join(REPORT_FILE), serde_json::to_vec_pretty(&self.report)?)?;
        fs::write(dir.join(TIMING_FILE), serde_json::to_vec_pretty(&serde_json::json!({ "epoch_seconds": self.epoch_seconds }))?)?;
        Ok(dir.join(MODEL_FILE))
    }

    /// Loads from a checkpoint path written by [`save`](Self::save); the
    /// Fisher, anchors and report are expected next to it.
    pub fn load(checkpoint: impl AsRef<Path>) -> Result<Self> {
        let checkpoint = checkpoint.as_ref();
        let dir = checkpoint.parent().unwrap_or(Path::new("."));
        let mut archive = load_archive(checkpoint).map_err(|e| missing(checkpoint, e))?;
        let meta = archive.metadata.clone();
        archive.metadata = meta.get("model").cloned().ok_or_else(|| Error::InvalidArgument("checkpoint lacks base metadata".into()))?;
        let model = TransducerModel::from_archive(&archive)?;
        let fisher = FisherEstimate::from_archive(&load_archive(dir.join(FISHER_FILE)).map_err(|e| missing(&dir.join(FISHER_FILE), e))?)?;
        let anchors = AnchorParameters::from_archive(&load_archive(dir.join(ANCHORS_FILE)).map_err(|e| missing(&dir.join(ANCHORS_FILE), e))?)?;
        let report: BaseReport = serde_json::from_slice(&fs::read(dir.join(REPORT_FILE)).map_err(|e| missing(&dir.join(REPORT_FILE), e.into()))?)?;
        Ok(Self { model, fisher, anchors, report, epoch_seconds: Vec::new() })
    }

    pub fn world(&self) -> Result<SynthWorld> {
        SynthWorld::new(self.report.config.world.clone(), self.report.config.world_seed)
    }
}

fn missing(path: &Path, e: Error) -> Error {
    match e {
        Error::Io(io) => Error::InvalidArgument(format!("cannot read {}: {io}", path.display())),
        e => e,
    }
}
