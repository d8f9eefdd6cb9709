//! The acceptance criteria as runnable checks. Each returns a
//! [`CriterionResult`]; internal errors count as failures with the error
//! text as detail.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{run, train_base, Bench, ExperimentConfig, ExperimentKind, ExperimentSpec, Outcome, FISHER_FILE, MODEL_FILE, REPORT_FILE, ANCHORS_FILE};
use crate::decode::{beam_decode, BiasContext};
use crate::error::{Error, Result};
use crate::ewc::{ewc_penalty, AnchorParameters, FisherEstimate};
use crate::grad::check::{check_gradient, GradCheck};
use crate::grad::kernels::log_add_exp;
use crate::grad::{Bindings, Tape, Tensor, Var};
use crate::loss::{batch_loss, lattice_loss, LossInput};
use crate::metrics::{align, keyword_pr, EditOp};
use crate::model::{ModelConfig, ParamGroup, TransducerModel};
use crate::sim::correct_names;
use crate::text;

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, title: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { id, title: title.into(), passed, detail: detail.into() }
    }

    fn from_result(id: u8, title: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(id, title, passed, detail),
            Err(e) => Self::new(id, title, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} [{mark}] {}: {}", self.id, self.title, self.detail)
    }
}

const GOLDEN_REF: &str = "zhuge dan was from yangdu";
const GOLDEN_HYP: &str = "zhuge was from young zhuge";
const GOLDEN_NAMES: [&str; 3] = ["zhuge", "dan", "yangdu"];

fn golden_names() -> BTreeSet<String> {
    GOLDEN_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Criterion 1: keyword counts on the worked alignment example.
pub fn golden_keyword_counts() -> CriterionResult {
    let a = align(&text::words(GOLDEN_REF), &text::words(GOLDEN_HYP));
    let r = keyword_pr(std::slice::from_ref(&a), &golden_names());
    let ops = (a.count(EditOp::Deletion), a.count(EditOp::Substitution), a.count(EditOp::Insertion));
    let passed =
        (r.n_ref, r.n_hyp, r.n_correct) == (3, 2, 1) && r.precision == 0.5 && r.recall == 1.0 / 3.0 && ops == (1, 1, 1);
    CriterionResult::new(
        1,
        "keyword precision/recall golden pair",
        passed,
        format!("N_r={} N_h={} N_c={} P={} R={} (del, sub, ins)={ops:?}", r.n_ref, r.n_hyp, r.n_correct, r.precision, r.recall),
    )
}

/// Criterion 2: name correction on the worked example.
pub fn golden_name_correction() -> CriterionResult {
    let out = correct_names(&text::words(GOLDEN_REF), &text::words(GOLDEN_HYP), &golden_names()).join(" ");
    CriterionResult::new(2, "name-corrected transcript golden pair", out == "zhuge dan was from yangdu zhuge", format!("{out:?}"))
}

/// Blank and label log-probabilities of a random lattice: each node gets a
/// random distribution over {blank, next label, everything else}.
fn random_lattice(rng: &mut impl Rng, frames: usize, labels: usize) -> (Tensor, Option<Tensor>) {
    let n = Normal::new(0.0, 1.5).expect("normal");
    let mut blank = Vec::with_capacity(frames * (labels + 1));
    let mut label = Vec::with_capacity(frames * labels);
    for _ in 0..frames {
        for u in 0..=labels {
            let logits: [f64; 3] = [n.sample(rng), n.sample(rng), n.sample(rng)];
            let lse = logits.iter().copied().fold(f64::NEG_INFINITY, log_add_exp);
            blank.push(logits[0] - lse);
            if u < labels {
                label.push(logits[1] - lse);
            }
        }
    }
    let blank = Tensor::new(vec![frames, labels + 1], blank).expect("blank shape");
    let label = (labels > 0).then(|| Tensor::new(vec![frames, labels], label).expect("label shape"));
    (blank, label)
}

/// `−log P` by explicit enumeration of every monotone alignment path.
pub fn enumerate_alignments(blank: &Tensor, label: Option<&Tensor>) -> f64 {
    let (frames, labels) = (blank.rows(), blank.cols() - 1);
    fn walk(b: &Tensor, l: Option<&Tensor>, t: usize, u: usize, acc: f64, out: &mut Vec<f64>) {
        let (frames, labels) = (b.rows(), b.cols() - 1);
        if t == frames - 1 && u == labels {
            out.push(acc + b.at(t, u));
            return;
        }
        if u < labels {
            walk(b, l, t, u + 1, acc + l.expect("labels").at(t, u), out);
        }
        if t + 1 < frames {
            walk(b, l, t + 1, u, acc + b.at(t, u), out);
        }
    }
    let mut paths = Vec::new();
    walk(blank, label, 0, 0, 0.0, &mut paths);
    debug_assert_eq!(paths.len(), binomial(frames - 1 + labels, labels));
    let max = paths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    -(max + paths.iter().map(|p| (p - max).exp()).sum::<f64>().ln())
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Criterion 3: lattice DP against path enumeration.
pub fn loss_oracle(seed: u64) -> CriterionResult {
    let r = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        for frames in 1..=4 {
            for labels in 0..=3 {
                for _ in 0..100 {
                    let (b, l) = random_lattice(&mut rng, frames, labels);
                    let dp = lattice_loss(&b, l.as_ref())?;
                    worst = worst.max((dp - enumerate_alignments(&b, l.as_ref())).abs());
                    cases += 1;
                }
            }
        }
        Ok((worst <= 1e-10, format!("{cases} lattices, max |DP − enumeration| = {worst:.3e}")))
    })();
    CriterionResult::from_result(3, "transducer loss equals alignment enumeration", r)
}

/// A small model for exhaustive finite differences.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        input_dim: 3,
        frame_stack: 2,
        encoder_layers: 2,
        encoder_stride_after: Some(1),
        lm_layers: 1,
        hidden_units: 3,
        projection_units: 2,
        joint_hidden: 3,
        vocab_size: 4,
    }
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape")
}

/// `Σ w ⊙ out` with fixed random weights, turning any op into a scalar.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_tensor(&mut rng, tape.shape(out), 1.0);
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

type Primitive = (&'static str, Vec<Vec<usize>>, fn(&mut Tape, &[Var]) -> Result<Var>);

fn primitives() -> Vec<Primitive> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| t.matmul(v[0], v[1])),
        ("add", vec![vec![2, 3], vec![2, 3]], |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![2, 3], vec![2, 3]], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| t.mul(v[0], v[1])),
        ("scale", vec![vec![5]], |t, v| t.scale(v[0], -1.7)),
        ("add_row", vec![vec![3, 4], vec![4]], |t, v| t.add_row(v[0], v[1])),
        ("sigmoid", vec![vec![6]], |t, v| t.sigmoid(v[0])),
        ("tanh", vec![vec![6]], |t, v| t.tanh(v[0])),
        ("exp", vec![vec![6]], |t, v| t.exp(v[0])),
        ("log_add_exp", vec![vec![5], vec![5]], |t, v| t.log_add_exp(v[0], v[1])),
        ("log_softmax", vec![vec![3, 5]], |t, v| t.log_softmax(v[0])),
        ("sum", vec![vec![2, 3]], |t, v| t.sum(v[0])),
        ("reshape", vec![vec![2, 3]], |t, v| t.reshape(v[0], &[3, 2])),
        ("slice_rows", vec![vec![4, 3]], |t, v| t.slice_rows(v[0], 1, 3)),
        ("slice_cols", vec![vec![3, 4]], |t, v| t.slice_cols(v[0], 1, 3)),
        ("concat_rows", vec![vec![2, 3], vec![1, 3]], |t, v| t.concat_rows(&[v[0], v[1], v[0]])),
        ("concat_cols", vec![vec![2, 3], vec![2, 1]], |t, v| t.concat_cols(&[v[0], v[1]])),
        ("gather", vec![vec![2, 3]], |t, v| t.gather(v[0], vec![Some(5), None, Some(0), Some(5)], -3.0)),
        ("gather_rows", vec![vec![3, 2]], |t, v| t.gather_rows(v[0], vec![Some(2), None, Some(0), Some(2)])),
        ("pairwise_add", vec![vec![2, 3], vec![3, 3]], |t, v| t.pairwise_add(v[0], v[1])),
    ]
}

/// Finite differences over the parameters of `group` in `model`.
pub fn check_model_gradient(
    model: &TransducerModel,
    group: ParamGroup,
    h: f64,
    f: impl Fn(&TransducerModel, &mut Tape, &Bindings) -> Result<Var>,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let bindings = model.bind(&mut tape, group);
    let root = f(model, &mut tape, &bindings)?;
    let value = tape.value(root).item();
    let grads = tape.backward(root)?;
    let slots = model.group_slots(group);
    let mut analytic = Vec::new();
    for &s in &slots {
        match grads.raw(bindings.var(s)) {
            Some(g) => analytic.extend_from_slice(g),
            None => analytic.extend(std::iter::repeat(0.0).take(model.params().get(s).numel())),
        }
    }
    let eval = |m: &TransducerModel| -> Result<f64> {
        let mut tape = Tape::new();
        let b = m.bind(&mut tape, ParamGroup::All);
        let root = f(m, &mut tape, &b)?;
        Ok(tape.value(root).item())
    };
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for &s in &slots {
        for k in 0..model.params().get(s).numel() {
            let x = model.params().get(s).value.values()[k];
            probe.params_mut().get_mut(s).value.values_mut()[k] = x + h;
            let up = eval(&probe)?;
            probe.params_mut().get_mut(s).value.values_mut()[k] = x - h;
            let down = eval(&probe)?;
            probe.params_mut().get_mut(s).value.values_mut()[k] = x;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok(GradCheck { value, analytic, numeric })
}

fn random_toy_model(seed: u64) -> Result<TransducerModel> {
    let mut model = TransducerModel::new(toy_config(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in model.params_mut().iter_mut() {
        p.value = random_tensor(&mut rng, p.value.shape(), 0.8);
    }
    Ok(model)
}

/// Criterion 4: finite-difference agreement for the primitives, the joint
/// network, the EWC penalty and the end-to-end loss.
pub fn gradient_suite(seed: u64) -> CriterionResult {
    let r = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lines = Vec::new();
        let mut passed = true;
        let mut worst_primitive: f64 = 0.0;
        for (i, (name, shapes, op)) in primitives().into_iter().enumerate() {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s, 1.0)).collect();
            let c = check_gradient(&inputs, 1e-5, |t, v| {
                let out = op(t, v)?;
                weighted_sum(t, out, seed + i as u64)
            })?;
            let e = c.rel_error();
            if e >= 1e-7 {
                passed = false;
                lines.push(format!("{name} {e:.2e}"));
            }
            worst_primitive = worst_primitive.max(e);
        }
        lines.push(format!("primitives max {worst_primitive:.2e}"));

        let model = random_toy_model(seed)?;
        let p = model.config().projection_units;
        let enc = random_tensor(&mut rng, &[1, p], 1.0);
        let lm = random_tensor(&mut rng, &[1, p], 1.0);
        let joint = check_model_gradient(&model, ParamGroup::Joint, 1e-5, |m, t, b| {
            let (e, l) = (t.constant(enc.clone()), t.constant(lm.clone()));
            let out = m.joint(t, b, e, l)?;
            weighted_sum(t, out, seed)
        })?;
        let joint_inputs = check_gradient(&[enc.clone(), lm.clone()], 1e-5, |t, v| {
            let b = model.bind(t, ParamGroup::All);
            let out = model.joint(t, &b, v[0], v[1])?;
            weighted_sum(t, out, seed)
        })?;
        let e = joint.rel_error().max(joint_inputs.rel_error());
        passed &= e < 1e-5;
        lines.push(format!("joint {e:.2e}"));

        let mut anchor_model = model.clone();
        for p in anchor_model.params_mut().iter_mut() {
            p.value = p.value.map(|x| x + 0.3);
        }
        let anchors = AnchorParameters::from_model(&anchor_model);
        let fisher = FisherEstimate::new(
            model.params().iter().map(|p| (p.id.clone(), random_tensor(&mut rng, p.value.shape(), 1.0).map(f64::abs))).collect::<BTreeMap<_, _>>(),
            1,
        )?;
        let penalty = check_model_gradient(&model, ParamGroup::All, 1e-5, |m, t, b| ewc_penalty(t, b, m, &anchors, &fisher, 3.0))?;
        let e = penalty.rel_error();
        passed &= e < 1e-7;
        lines.push(format!("EWC penalty {e:.2e}"));

        let features: Vec<Tensor> = [9usize, 12].iter().map(|&t| random_tensor(&mut rng, &[t, 3], 1.0)).collect();
        let targets: Vec<Vec<usize>> = vec![vec![0, 2, 1], vec![3, 3]];
        let batch: Vec<LossInput<'_>> =
            features.iter().zip(&targets).map(|(f, t)| LossInput { features: f, targets: t }).collect();
        let e2e = check_model_gradient(&model, ParamGroup::All, 1e-5, |m, t, b| Ok(batch_loss(m, t, b, &batch)?.1))?;
        let e = e2e.rel_error();
        passed &= e < 1e-5;
        lines.push(format!("end-to-end loss {e:.2e} over {} parameters", e2e.analytic.len()));
        Ok((passed, lines.join("; ")))
    })();
    CriterionResult::from_result(4, "finite-difference gradient suite", r)
}

/// Whether `text` contains `phrase` starting at a word boundary.
fn completes(text: &str, phrase: &str) -> bool {
    text.match_indices(phrase).any(|(i, _)| i == 0 || text.as_bytes()[i - 1] == b' ')
}

/// Criterion 8: zero boost is bit-identical to no bias, and failed partial
/// matches leave exactly zero net credit.
pub fn bias_neutrality(seed: u64) -> CriterionResult {
    let r = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut identical = 0;
        let mut mismatches = 0;
        let phrases = ["ab", "abc", "ba", "c"];
        for k in 0..20 {
            let model = random_toy_model(seed + k)?;
            let frames = rng.gen_range(8..20);
            let feats = random_tensor(&mut rng, &[frames, 3], 1.5);
            let plain = beam_decode(&model, &feats, 4, None)?;
            let zero = BiasContext::new(&phrases, 0.0, 0.0)?;
            let biased = beam_decode(&model, &feats, 4, Some(&zero))?;
            let same = plain.len() == biased.len()
                && plain.iter().zip(&biased).all(|(a, b)| a.labels == b.labels && a.score.to_bits() == b.score.to_bits());
            if same {
                identical += 1;
            } else {
                mismatches += 1;
            }
        }

        // adversarial prefixes: every proper prefix of every phrase, alone,
        // followed by a diverging letter, and embedded mid-word
        let names = ["zhuge", "zhugeliang", "dan", "daniel", "yangdu"];
        let mut corpus = Vec::new();
        for n in names {
            for cut in 1..n.len() {
                let prefix = &n[..cut];
                if names.iter().any(|m| completes(prefix, m)) {
                    continue;
                }
                corpus.push(prefix.to_string());
                corpus.push(format!("{prefix}x was"));
                corpus.push(format!("was {prefix}q {prefix}"));
                corpus.push(format!("o{n} {prefix}"));
            }
        }
        let mut leaks = Vec::new();
        for boost in [0.1, 0.7, 1.0, 3.3] {
            let ctx = BiasContext::new(&names, boost, 2.0 * boost)?;
            for s in &corpus {
                let mut state = ctx.start();
                let mut total = 0.0;
                for l in text::to_labels(s)? {
                    total += ctx.advance(&mut state, l);
                }
                let net = total - state.pending();
                if state.banked() != 0.0 || net.abs() > 1e-12 {
                    leaks.push(format!("{s:?}@{boost}: banked {} net {net:e}", state.banked()));
                }
            }
        }

        // in search, hypotheses that complete no phrase carry no bias
        let mut decoded = 0;
        let mut bad = Vec::new();
        let toy_phrases = ["ab", "ca", "bbb"];
        for k in 0..10 {
            let model = random_toy_model(seed + 100 + k)?;
            let feats = random_tensor(&mut rng, &[16, 3], 1.5);
            let ctx = BiasContext::new(&toy_phrases, 1.5, 1.0)?;
            for h in beam_decode(&model, &feats, 6, Some(&ctx))? {
                decoded += 1;
                let text = text::from_labels(&h.labels);
                if !toy_phrases.iter().any(|p| completes(&text.replace('\'', " "), p)) && h.bias_score != 0.0 {
                    bad.push(format!("{text:?}: {}", h.bias_score));
                }
            }
        }
        let passed = mismatches == 0 && leaks.is_empty() && bad.is_empty();
        Ok((
            passed,
            format!(
                "{identical}/20 zero-boost searches identical; {} adversarial prefixes × 4 boosts, leaks {leaks:?}; {decoded} biased hypotheses, stray credit {bad:?}",
                corpus.len()
            ),
        ))
    })();
    CriterionResult::from_result(8, "bias neutrality at zero boost and prefix rollback", r)
}

fn experiment_criterion(id: u8, title: &str, outcome: Result<Outcome>, wanted: &[&str]) -> CriterionResult {
    let r = outcome.map(|o| {
        let relevant: Vec<_> = o.checks.iter().filter(|c| wanted.is_empty() || wanted.iter().any(|w| c.name.contains(w))).collect();
        let passed = !relevant.is_empty() && relevant.iter().all(|c| c.passed);
        let detail = relevant
            .iter()
            .map(|c| format!("{} {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        (passed, detail)
    });
    CriterionResult::from_result(id, title, r)
}

fn spec(kind: ExperimentKind, config: &ExperimentConfig, seeds: &[u64]) -> ExperimentSpec {
    ExperimentSpec { experiment: kind, seeds: seeds.to_vec(), config: config.clone() }
}

/// Criterion 5.
pub fn ewc_direction(bench: &Bench, config: &ExperimentConfig, seeds: &[u64]) -> CriterionResult {
    let o = run(bench, &spec(ExperimentKind::EwcAblation, config, seeds));
    experiment_criterion(5, "EWC reduces forgetting at comparable user WER", o, &["reduces median", "within +10%", "some λ"])
}

/// Criterion 6.
pub fn layer_direction(bench: &Bench, config: &ExperimentConfig, seeds: &[u64]) -> CriterionResult {
    let o = run(bench, &spec(ExperimentKind::LayerSelection, config, seeds));
    experiment_criterion(6, "layer-selection ordering", o, &["All ≤ Decoder ≤ Joint", "LM within"])
}

/// Criterion 7.
pub fn supervision_ladder(bench: &Bench, config: &ExperimentConfig, seeds: &[u64]) -> CriterionResult {
    let o = run(bench, &spec(ExperimentKind::BiasingGrid, config, seeds));
    experiment_criterion(7, "supervision ladder and biasing trade-off", o, &[])
}

/// Criterion 9.
pub fn throughput_direction(bench: &Bench, config: &ExperimentConfig, seed: u64) -> CriterionResult {
    let o = run(bench, &spec(ExperimentKind::ThroughputBenchmark, config, &[seed]));
    experiment_criterion(9, "epoch time falls with batch size", o, &[])
}

/// Criterion 10: retraining the base model from the checkpoint's own
/// configuration reproduces every saved file byte for byte, and running
/// an experiment twice yields identical reports.
pub fn determinism(bench: &Bench, checkpoint: &Path, config: &ExperimentConfig, seed: u64, scratch: &Path) -> CriterionResult {
    let r = (|| {
        let dir = checkpoint.parent().unwrap_or(Path::new("."));
        let again = train_base(&bench.base.report.config)?;
        again.save(scratch)?;
        let mut differing = Vec::new();
        for f in [MODEL_FILE, FISHER_FILE, ANCHORS_FILE, REPORT_FILE] {
            if fs::read(dir.join(f))? != fs::read(scratch.join(f))? {
                differing.push(f);
            }
        }
        let s = spec(ExperimentKind::EwcAblation, config, &[seed]);
        let a = serde_json::to_vec(&run(bench, &s)?.report)?;
        let b = serde_json::to_vec(&run(bench, &s)?.report)?;
        let passed = differing.is_empty() && a == b;
        Ok((passed, format!("base artifacts differing: {differing:?}; ewc_ablation reports identical: {}", a == b)))
    })();
    CriterionResult::from_result(10, "byte-identical reruns", r)
}

/// Runs every criterion. Slow ones use `bench` and `seeds`.
pub fn evaluate_all(
    checkpoint: &Path,
    config: &ExperimentConfig,
    seeds: &[u64],
    scratch: &Path,
    mut on_result: impl FnMut(&CriterionResult),
) -> Result<Vec<CriterionResult>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let bench = Bench::load(checkpoint)?;
    let mut out = Vec::new();
    let mut push = |r: CriterionResult| {
        on_result(&r);
        out.push(r);
    };
    push(golden_keyword_counts());
    push(golden_name_correction());
    push(loss_oracle(seeds[0]));
    push(gradient_suite(seeds[0]));
    push(ewc_direction(&bench, config, seeds));
    push(layer_direction(&bench, config, seeds));
    push(supervision_ladder(&bench, config, seeds));
    push(bias_neutrality(seeds[0]));
    push(throughput_direction(&bench, config, seeds[0]));
    push(determinism(&bench, checkpoint, config, seeds[0], scratch));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check::relative_error;

    #[test]
    fn enumeration_counts_paths() {
        assert_eq!(binomial(5, 2), 10);
        let blank = Tensor::filled(&[3, 3], 0.0);
        let label = Tensor::filled(&[3, 2], 0.0);
        // every path has probability 1, so −log P = −log(#paths)
        assert!((enumerate_alignments(&blank, Some(&label)) + (binomial(4, 2) as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn boundary_completion() {
        assert!(completes("a zhuge", "zhu"));
        assert!(!completes("ozhuge", "zhu"));
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
    }
}
