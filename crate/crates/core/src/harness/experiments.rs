use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{median, Bench, Check, ExperimentConfig, ExperimentSpec, Outcome, Report};
use crate::decode::{beam_decode, BiasContext};
use crate::error::Result;
use crate::loss::LossInput;
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{ParamGroup, TransducerModel};
use crate::sim::{build_condition, SupervisionTag, SynthWorld, UserProfile};
use crate::text;
use crate::trainer::{peak_rss_bytes, personalize, train_epochs, EvalSet, EvalSuite, EwcTerm, TrainReport, TrainingCache};

/// WER and the name / non-name keyword scores of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub wer: f64,
    pub name_precision: f64,
    pub name_recall: f64,
    pub non_name_precision: f64,
    pub non_name_recall: f64,
}

impl From<&EvaluationReport> for Scores {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            wer: r.wer,
            name_precision: r.keywords.precision,
            name_recall: r.keywords.recall,
            non_name_precision: r.non_keywords.precision,
            non_name_recall: r.non_keywords.recall,
        }
    }
}

/// One simulated user with a rendered test set.
pub struct UserData {
    pub profile: UserProfile,
    pub names: BTreeSet<String>,
    pub test: EvalSet,
}

impl UserData {
    /// User number `seed` of `world`.
    pub fn new(world: &SynthWorld, seed: u64) -> Result<Self> {
        let profile = world.user(seed as usize);
        let mut test = EvalSet::default();
        for u in &profile.test {
            test.push(world.render(u, Some(&profile))?, &u.transcript);
        }
        let names = profile.names.iter().cloned().collect();
        Ok(Self { profile, names, test })
    }

    fn suite(&self, base_test: Option<&EvalSet>) -> EvalSuite {
        EvalSuite { user_test: self.test.clone(), base_test: base_test.cloned(), keywords: self.names.clone() }
    }

    fn bias(&self, boost: f64, ratio: f64) -> Result<BiasContext> {
        BiasContext::new(&self.profile.names, boost, boost * ratio)
    }

    /// Beam-search scores on the test set, optionally biased toward the names.
    pub fn beam_scores(&self, model: &TransducerModel, beam_width: usize, bias: Option<&BiasContext>) -> Result<Scores> {
        let hyps = self
            .test
            .features
            .iter()
            .map(|f| Ok(text::words(&beam_decode(model, f, beam_width, bias)?.remove(0).text)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scores::from(&evaluate(&self.test.references, &hyps, &self.names)?))
    }
}

fn user_id(user: &UserData) -> String {
    user.profile.speaker.id.clone()
}

fn report<R: Serialize, S: Serialize>(
    bench: &Bench,
    spec: &ExperimentSpec,
    runs: Vec<R>,
    summary: S,
    checks: Vec<Check>,
    timing: serde_json::Value,
) -> Result<Outcome> {
    let report = Report {
        experiment: spec.experiment,
        seeds: spec.seeds.clone(),
        config: spec.config.clone(),
        base: bench.base.report.config.clone(),
        runs,
        summary,
        checks: checks.clone(),
    };
    Ok(Outcome { experiment: spec.experiment, report: serde_json::to_value(report)?, timing, checks })
}

fn timings(reports: &[(String, &TrainReport)]) -> serde_json::Value {
    let runs: Vec<_> = reports
        .iter()
        .map(|(label, r)| serde_json::json!({ "run": label, "timing": r.timing }))
        .collect();
    serde_json::json!({ "runs": runs, "peak_rss_bytes": peak_rss_bytes() })
}

fn cache(bench: &Bench, user: &UserData, tag: SupervisionTag, config: &ExperimentConfig) -> Result<TrainingCache> {
    let bias = match tag {
        SupervisionTag::Biased => Some(user.bias(config.condition_boost, config.final_boost_ratio)?),
        _ => None,
    };
    build_condition(tag, &bench.world, &user.profile, Some(&bench.base.model), bias.as_ref(), config.beam_width)
}

fn fmt_seq(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" → ")
}

// ---------------------------------------------------------------- layers

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub group: ParamGroup,
    pub trainable_parameters: usize,
    /// Fine-tuned on synthesized training sentences.
    pub tts: Scores,
    /// Fine-tuned on the user's own speech with reference transcripts.
    pub real: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRun {
    pub seed: u64,
    pub user: String,
    pub baseline: Scores,
    pub rows: Vec<LayerRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMedian {
    pub group: ParamGroup,
    pub trainable_parameters: usize,
    pub tts_wer: f64,
    pub real_wer: f64,
    pub tts_name_recall: f64,
    pub real_name_recall: f64,
}

pub fn layer_selection(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let suite = user.suite(None);
        let real = cache(bench, &user, SupervisionTag::Supervised, config)?.snapshot();
        let tts = cache(bench, &user, SupervisionTag::TtsSentences, config)?.snapshot();
        let mut rows = Vec::new();
        let mut baseline = None;
        for group in ParamGroup::ALL {
            let recipe = crate::trainer::TrainConfig { trainable_group: group, ..config.recipe(seed) };
            let (_, tts_report) = personalize(&bench.base.model, &tts, &suite, &recipe, None)?;
            let (_, real_report) = personalize(&bench.base.model, &real, &suite, &recipe, None)?;
            baseline.get_or_insert(Scores::from(&real_report.initial.user));
            rows.push(LayerRow {
                group,
                trainable_parameters: real_report.trainable_parameters,
                tts: Scores::from(&tts_report.returned().user),
                real: Scores::from(&real_report.returned().user),
            });
            reports.push((format!("seed{seed}/{group}/tts"), tts_report));
            reports.push((format!("seed{seed}/{group}/real"), real_report));
        }
        runs.push(LayerRun { seed, user: user_id(&user), baseline: baseline.expect("five groups"), rows });
    }
    let summary: Vec<LayerMedian> = ParamGroup::ALL
        .iter()
        .enumerate()
        .map(|(i, &group)| {
            let col = |f: fn(&LayerRow) -> f64| median(&runs.iter().map(|r| f(&r.rows[i])).collect::<Vec<_>>());
            LayerMedian {
                group,
                trainable_parameters: runs[0].rows[i].trainable_parameters,
                tts_wer: col(|r| r.tts.wer),
                real_wer: col(|r| r.real.wer),
                tts_name_recall: col(|r| r.tts.name_recall),
                real_name_recall: col(|r| r.real.name_recall),
            }
        })
        .collect();
    let get = |g: ParamGroup| summary.iter().find(|m| m.group == g).expect("every group");
    let (all, decoder, joint, lm, encoder) =
        (get(ParamGroup::All), get(ParamGroup::Decoder), get(ParamGroup::Joint), get(ParamGroup::Lm), get(ParamGroup::Encoder));
    let checks = vec![
        Check::new(
            "real-supervision WER: All ≤ Decoder ≤ Joint",
            all.real_wer <= decoder.real_wer && decoder.real_wer <= joint.real_wer,
            format!("All {:.4}, Decoder {:.4}, Joint {:.4}", all.real_wer, decoder.real_wer, joint.real_wer),
        ),
        Check::new(
            "TTS-supervision WER: LM within 0.05 of All",
            lm.tts_wer <= all.tts_wer + 0.05,
            format!("LM {:.4}, All {:.4}", lm.tts_wer, all.tts_wer),
        ),
        Check::new(
            "parameter partition: All = Encoder + Decoder",
            all.trainable_parameters == encoder.trainable_parameters + decoder.trainable_parameters,
            format!("{} = {} + {}", all.trainable_parameters, encoder.trainable_parameters, decoder.trainable_parameters),
        ),
    ];
    let refs: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let timing = timings(&refs);
    report(bench, spec, runs, summary, checks, timing)
}

// ------------------------------------------------------------------- EWC

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochPoint {
    pub epoch: usize,
    pub user_wer: f64,
    pub base_wer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcRow {
    pub lambda: f64,
    pub user: Scores,
    pub base_wer: f64,
    /// Base-test WER after fine-tuning minus before.
    pub base_degradation: f64,
    /// Every fifth epoch.
    pub trajectory: Vec<EpochPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcRun {
    pub seed: u64,
    pub user: String,
    pub base_wer_before: f64,
    pub user_wer_before: f64,
    pub rows: Vec<EwcRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcMedian {
    pub lambda: f64,
    pub user_wer: f64,
    pub base_degradation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcSummary {
    pub rows: Vec<EwcMedian>,
    /// Non-zero λ with the least median base degradation among those whose
    /// median user WER stays within 10% of the λ = 0 value.
    pub best_lambda: Option<f64>,
}

/// Full-model fine-tuning for exactly the configured epochs (no early
/// stopping) at λ = 0 and every grid value.
pub fn ewc_ablation(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let lambdas: Vec<f64> = std::iter::once(0.0).chain(config.lambdas.iter().copied()).collect();
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let suite = user.suite(Some(&bench.base_test));
        let data = cache(bench, &user, SupervisionTag::Supervised, config)?.snapshot();
        let mut rows = Vec::new();
        let (mut base_before, mut user_before) = (0.0, 0.0);
        for &lambda in &lambdas {
            let recipe = crate::trainer::TrainConfig {
                trainable_group: ParamGroup::All,
                lambda,
                patience: None,
                ..config.recipe(seed)
            };
            let ewc = (lambda > 0.0).then_some(EwcTerm { anchors: &bench.base.anchors, fisher: &bench.base.fisher });
            let (_, r) = personalize(&bench.base.model, &data, &suite, &recipe, ewc)?;
            base_before = r.initial.base.as_ref().expect("base test").wer;
            user_before = r.initial.user.wer;
            let ret = r.returned();
            let base_wer = ret.base.as_ref().expect("base test").wer;
            let trajectory = r
                .epochs
                .iter()
                .filter(|e| e.epoch % 5 == 0)
                .map(|e| EpochPoint { epoch: e.epoch, user_wer: e.eval.user.wer, base_wer: e.eval.base.as_ref().expect("base test").wer })
                .collect();
            rows.push(EwcRow { lambda, user: Scores::from(&ret.user), base_wer, base_degradation: base_wer - base_before, trajectory });
            reports.push((format!("seed{seed}/lambda{lambda:e}"), r));
        }
        runs.push(EwcRun { seed, user: user_id(&user), base_wer_before: base_before, user_wer_before: user_before, rows });
    }
    let medians: Vec<EwcMedian> = lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| EwcMedian {
            lambda,
            user_wer: median(&runs.iter().map(|r| r.rows[i].user.wer).collect::<Vec<_>>()),
            base_degradation: median(&runs.iter().map(|r| r.rows[i].base_degradation).collect::<Vec<_>>()),
        })
        .collect();
    let reference = &medians[0];
    let allowed = reference.user_wer * 1.1;
    let best = medians[1..]
        .iter()
        .filter(|m| m.user_wer <= allowed)
        .min_by(|a, b| a.base_degradation.total_cmp(&b.base_degradation).then(a.lambda.total_cmp(&b.lambda)));
    let mut checks = Vec::new();
    match best {
        Some(b) => {
            let i = lambdas.iter().position(|&l| l == b.lambda).expect("grid value");
            let wins = runs.iter().filter(|r| r.rows[i].base_degradation <= r.rows[0].base_degradation).count();
            checks.push(Check::new(
                "best λ reduces median base degradation",
                b.base_degradation < reference.base_degradation,
                format!("λ={:e}: {:.4} vs λ=0: {:.4}", b.lambda, b.base_degradation, reference.base_degradation),
            ));
            checks.push(Check::new(
                "best λ keeps user WER within +10%",
                b.user_wer <= allowed,
                format!("{:.4} ≤ {:.4}", b.user_wer, allowed),
            ));
            checks.push(Check::new(
                "best λ forgets no more than λ=0 in at least 2 of 3 seeds",
                3 * wins >= 2 * runs.len(),
                format!("{wins} of {} seeds", runs.len()),
            ));
        }
        None => checks.push(Check::new(
            "some λ keeps user WER within +10%",
            false,
            format!("λ=0 user WER {:.4}; medians {}", reference.user_wer, fmt_seq(&medians.iter().map(|m| m.user_wer).collect::<Vec<_>>())),
        )),
    }
    let summary = EwcSummary { rows: medians.clone(), best_lambda: best.map(|b| b.lambda) };
    let refs: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let timing = timings(&refs);
    report(bench, spec, runs, summary, checks, timing)
}

// ---------------------------------------------------------- TTS mismatch

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchRow {
    pub mismatch: f64,
    pub group: ParamGroup,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MismatchRun {
    pub seed: u64,
    pub user: String,
    pub rows: Vec<MismatchRow>,
}

/// Fine-tunes LM and All on synthesized sentences while the synthesizer
/// drifts away from the voices the base model was trained on.
pub fn tts_mismatch(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let groups = [ParamGroup::Lm, ParamGroup::All];
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let suite = user.suite(None);
        let mut rows = Vec::new();
        for &m in &config.tts_mismatches {
            let world = bench.world.with_tts_mismatch(m);
            let data = build_condition(SupervisionTag::TtsSentences, &world, &user.profile, None, None, config.beam_width)?.snapshot();
            for group in groups {
                let recipe = crate::trainer::TrainConfig { trainable_group: group, ..config.recipe(seed) };
                let (_, r) = personalize(&bench.base.model, &data, &suite, &recipe, None)?;
                rows.push(MismatchRow { mismatch: m, group, scores: Scores::from(&r.returned().user) });
                reports.push((format!("seed{seed}/mismatch{m}/{group}"), r));
            }
        }
        runs.push(MismatchRun { seed, user: user_id(&user), rows });
    }
    let summary: Vec<MismatchRow> = (0..runs[0].rows.len())
        .map(|i| {
            let col = |f: fn(&Scores) -> f64| median(&runs.iter().map(|r| f(&r.rows[i].scores)).collect::<Vec<_>>());
            MismatchRow {
                mismatch: runs[0].rows[i].mismatch,
                group: runs[0].rows[i].group,
                scores: Scores {
                    wer: col(|s| s.wer),
                    name_precision: col(|s| s.name_precision),
                    name_recall: col(|s| s.name_recall),
                    non_name_precision: col(|s| s.non_name_precision),
                    non_name_recall: col(|s| s.non_name_recall),
                },
            }
        })
        .collect();
    let refs: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let timing = timings(&refs);
    report(bench, spec, runs, summary, Vec::new(), timing)
}

// ------------------------------------------------------ supervision ladder

/// Rows of the supervision studies: the untouched base model, then one per
/// condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    #[serde(untagged)]
    Trained(SupervisionTag),
}

impl Condition {
    pub fn all() -> Vec<Condition> {
        std::iter::once(Condition::Baseline).chain(SupervisionTag::ALL.into_iter().map(Condition::Trained)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Trained(t) => t.name(),
        }
    }
}

/// The chain whose name recall must rise strictly.
pub const LADDER: [Condition; 4] = [
    Condition::Baseline,
    Condition::Trained(SupervisionTag::TtsNames),
    Condition::Trained(SupervisionTag::TtsSentences),
    Condition::Trained(SupervisionTag::SemiSupervised),
];

struct ConditionModel {
    condition: Condition,
    model: TransducerModel,
    examples: usize,
    /// Name recall of the training transcripts against the references.
    transcript_name_recall: Option<f64>,
    report: Option<TrainReport>,
}

fn condition_models(bench: &Bench, user: &UserData, config: &ExperimentConfig, seed: u64) -> Result<Vec<ConditionModel>> {
    let suite = user.suite(None);
    let recipe = crate::trainer::TrainConfig {
        trainable_group: config.ladder_group,
        patience: config.ladder_patience,
        ..config.recipe(seed)
    };
    let mut out = vec![ConditionModel {
        condition: Condition::Baseline,
        model: bench.base.model.clone(),
        examples: 0,
        transcript_name_recall: None,
        report: None,
    }];
    for tag in SupervisionTag::ALL {
        let data = cache(bench, user, tag, config)?.snapshot();
        let transcript_name_recall = match tag {
            SupervisionTag::TtsNames => None,
            _ => {
                let refs: Vec<Vec<String>> = user.profile.train.iter().map(|u| text::words(&u.transcript)).collect();
                let hyps: Vec<Vec<String>> = data.entries().iter().map(|e| text::words(&e.transcript)).collect();
                Some(evaluate(&refs, &hyps, &user.names)?.keywords.recall)
            }
        };
        let (model, r) = personalize(&bench.base.model, &data, &suite, &recipe, None)?;
        out.push(ConditionModel {
            condition: Condition::Trained(tag),
            model,
            examples: data.len(),
            transcript_name_recall,
            report: Some(r),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub condition: Condition,
    pub examples: usize,
    pub transcript_name_recall: Option<f64>,
    pub returned_epoch: usize,
    /// Unbiased beam search.
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub seed: u64,
    pub user: String,
    pub rows: Vec<LevelRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionMedian {
    pub condition: Condition,
    pub wer: f64,
    pub name_precision: f64,
    pub name_recall: f64,
}

fn ladder_check(medians: &[ConditionMedian], recall: impl Fn(&ConditionMedian) -> f64, label: &str) -> Vec<Check> {
    let get = |c: Condition| medians.iter().find(|m| m.condition == c).expect("every condition");
    let chain: Vec<f64> = LADDER.iter().map(|&c| recall(get(c))).collect();
    let semi = recall(get(Condition::Trained(SupervisionTag::SemiSupervised)));
    let sup = recall(get(Condition::Trained(SupervisionTag::Supervised)));
    vec![
        Check::new(
            format!("{label}name recall rises strictly: baseline → tts_names → tts_sentences → semi_supervised"),
            chain.windows(2).all(|w| w[0] < w[1]),
            fmt_seq(&chain),
        ),
        Check::new(format!("{label}name recall: supervised ≥ semi_supervised"), sup >= semi, format!("{sup:.4} vs {semi:.4}")),
    ]
}

pub fn supervision_levels(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let mut rows = Vec::new();
        for cm in condition_models(bench, &user, config, seed)? {
            rows.push(LevelRow {
                condition: cm.condition,
                examples: cm.examples,
                transcript_name_recall: cm.transcript_name_recall,
                returned_epoch: cm.report.as_ref().map_or(0, |r| r.returned_epoch),
                scores: user.beam_scores(&cm.model, config.beam_width, None)?,
            });
            if let Some(r) = cm.report {
                reports.push((format!("seed{seed}/{}", cm.condition.name()), r));
            }
        }
        runs.push(LevelRun { seed, user: user_id(&user), rows });
    }
    let summary: Vec<ConditionMedian> = (0..runs[0].rows.len())
        .map(|i| {
            let col = |f: fn(&Scores) -> f64| median(&runs.iter().map(|r| f(&r.rows[i].scores)).collect::<Vec<_>>());
            ConditionMedian {
                condition: runs[0].rows[i].condition,
                wer: col(|s| s.wer),
                name_precision: col(|s| s.name_precision),
                name_recall: col(|s| s.name_recall),
            }
        })
        .collect();
    let checks = ladder_check(&summary, |m| m.name_recall, "");
    let refs: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let timing = timings(&refs);
    report(bench, spec, runs, summary, checks, timing)
}

// ----------------------------------------------------------- biasing grid

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostScores {
    pub boost: f64,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub condition: Condition,
    /// Boost 0 first, then the configured grid.
    pub decodes: Vec<BoostScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub seed: u64,
    pub user: String,
    pub rows: Vec<GridRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMedian {
    pub condition: Condition,
    pub unbiased: ConditionMedian,
    /// Grid boost with the highest median name recall (smallest on ties).
    pub best_boost: f64,
    pub biased: ConditionMedian,
    pub by_boost: Vec<BoostScores>,
}

/// Every condition decoded without bias and at every grid boost.
pub fn biasing_grid(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let boosts: Vec<f64> = std::iter::once(0.0).chain(config.boosts.iter().copied()).collect();
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let mut rows = Vec::new();
        for cm in condition_models(bench, &user, config, seed)? {
            let mut decodes = Vec::with_capacity(boosts.len());
            for &boost in &boosts {
                let bias = (boost > 0.0).then(|| user.bias(boost, config.final_boost_ratio)).transpose()?;
                decodes.push(BoostScores { boost, scores: user.beam_scores(&cm.model, config.beam_width, bias.as_ref())? });
            }
            rows.push(GridRow { condition: cm.condition, decodes });
            if let Some(r) = cm.report {
                reports.push((format!("seed{seed}/{}", cm.condition.name()), r));
            }
        }
        runs.push(GridRun { seed, user: user_id(&user), rows });
    }
    let summary: Vec<GridMedian> = (0..runs[0].rows.len())
        .map(|i| {
            let condition = runs[0].rows[i].condition;
            let by_boost: Vec<BoostScores> = (0..boosts.len())
                .map(|j| {
                    let col = |f: fn(&Scores) -> f64| median(&runs.iter().map(|r| f(&r.rows[i].decodes[j].scores)).collect::<Vec<_>>());
                    BoostScores {
                        boost: boosts[j],
                        scores: Scores {
                            wer: col(|s| s.wer),
                            name_precision: col(|s| s.name_precision),
                            name_recall: col(|s| s.name_recall),
                            non_name_precision: col(|s| s.non_name_precision),
                            non_name_recall: col(|s| s.non_name_recall),
                        },
                    }
                })
                .collect();
            let as_median = |b: &BoostScores| ConditionMedian {
                condition,
                wer: b.scores.wer,
                name_precision: b.scores.name_precision,
                name_recall: b.scores.name_recall,
            };
            let best = by_boost[1..]
                .iter()
                .fold(None::<&BoostScores>, |acc, b| match acc {
                    Some(a) if a.scores.name_recall >= b.scores.name_recall => Some(a),
                    _ => Some(b),
                })
                .unwrap_or(&by_boost[0]);
            GridMedian { condition, unbiased: as_median(&by_boost[0]), best_boost: best.boost, biased: as_median(best), by_boost: by_boost.clone() }
        })
        .collect();
    let unbiased: Vec<ConditionMedian> = summary.iter().map(|g| g.unbiased.clone()).collect();
    let mut checks = ladder_check(&unbiased, |m| m.name_recall, "");
    let no_recall_loss: Vec<String> =
        summary.iter().filter(|g| g.biased.name_recall < g.unbiased.name_recall).map(|g| g.condition.name().to_string()).collect();
    let no_precision_gain: Vec<String> =
        summary.iter().filter(|g| g.biased.name_precision > g.unbiased.name_precision).map(|g| g.condition.name().to_string()).collect();
    checks.push(Check::new(
        "biasing at the best boost never lowers name recall",
        no_recall_loss.is_empty(),
        format!("violations: {no_recall_loss:?}"),
    ));
    checks.push(Check::new(
        "biasing at the best boost never raises name precision",
        no_precision_gain.is_empty(),
        format!("violations: {no_precision_gain:?}"),
    ));
    let refs: Vec<_> = reports.iter().map(|(l, r)| (l.clone(), r)).collect();
    let timing = timings(&refs);
    report(bench, spec, runs, summary, checks, timing)
}

// ------------------------------------------------------------- throughput

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub batch_size: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRun {
    pub seed: u64,
    pub user: String,
    pub examples: usize,
    pub rows: Vec<ThroughputRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTiming {
    pub seed: u64,
    pub batch_size: usize,
    /// Fastest of the repeated epochs.
    pub epoch_seconds: f64,
    pub repeats: Vec<f64>,
}

/// Times one full-model epoch over the supervised user cache per batch
/// size. Loss values go into the report; times go into the timing file
/// and the checks.
pub fn throughput_benchmark(bench: &Bench, spec: &ExperimentSpec) -> Result<Outcome> {
    let config = &spec.config;
    let mut runs = Vec::new();
    let mut times = Vec::new();
    for &seed in &spec.seeds {
        let user = UserData::new(&bench.world, seed)?;
        let data = cache(bench, &user, SupervisionTag::Supervised, config)?.snapshot();
        let inputs: Vec<LossInput<'_>> = data.entries().iter().map(|e| LossInput { features: &e.features, targets: &e.labels }).collect();
        let sizes = &config.throughput_batch_sizes;
        let recipes: Vec<_> = sizes
            .iter()
            .map(|&batch_size| crate::trainer::TrainConfig { batch_size, epochs: 1, trainable_group: ParamGroup::All, ..config.recipe(seed) })
            .collect();
        // rounds visit every batch size in turn so slow drift in machine
        // load does not favour one size
        let mut repeats = vec![Vec::with_capacity(config.throughput_repeats); sizes.len()];
        let mut mean_loss = vec![0.0; sizes.len()];
        for _ in 0..config.throughput_repeats {
            for (k, recipe) in recipes.iter().enumerate() {
                let mut model = bench.base.model.clone();
                let start = Instant::now();
                let (losses, _) = train_epochs(&mut model, &inputs, recipe, |_, _, _| true)?;
                repeats[k].push(start.elapsed().as_secs_f64());
                mean_loss[k] = losses[0];
            }
        }
        let mut rows = Vec::with_capacity(sizes.len());
        for ((&batch_size, repeats), mean_loss) in sizes.iter().zip(repeats).zip(mean_loss) {
            let epoch_seconds = repeats.iter().copied().fold(f64::INFINITY, f64::min);
            times.push(ThroughputTiming { seed, batch_size, epoch_seconds, repeats });
            rows.push(ThroughputRow { batch_size, steps: inputs.len().div_ceil(batch_size), mean_loss });
        }
        runs.push(ThroughputRun { seed, user: user_id(&user), examples: inputs.len(), rows });
    }
    let mut checks = Vec::new();
    for &seed in &spec.seeds {
        let seq: Vec<f64> = times.iter().filter(|t| t.seed == seed).map(|t| t.epoch_seconds).collect();
        checks.push(Check::new(
            format!("seed {seed}: epoch time strictly decreases with batch size"),
            seq.windows(2).all(|w| w[1] < w[0]),
            fmt_seq(&seq),
        ));
    }
    let timing = serde_json::json!({ "epochs": times, "peak_rss_bytes": peak_rss_bytes(), "checks": checks });
    let sizes = config.throughput_batch_sizes.clone();
    report(bench, spec, runs, serde_json::json!({ "batch_sizes": sizes }), Vec::new(), timing).map(|mut o| {
        o.checks = checks;
        o
    })
}
