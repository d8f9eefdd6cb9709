//! Elastic weight consolidation: an empirical Fisher estimate on the base
//! task and the quadratic penalty anchoring parameters to their base values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::grad::{Bindings, Tape, Tensor, Var};
use crate::loss::{batch_loss, LossInput};
use crate::model::{ParamGroup, TensorArchive, TransducerModel};

/// Snapshot of the base-task parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorParameters {
    values: BTreeMap<String, Tensor>,
}

impl AnchorParameters {
    pub fn from_model(model: &TransducerModel) -> Self {
        Self { values: model.params().iter().map(|p| (p.id.clone(), p.value.clone())).collect() }
    }

    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.values.get(id)
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new("anchors", json!({}));
        a.tensors = self.values.clone();
        a
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        archive.expect_kind("anchors")?;
        Ok(Self { values: archive.tensors.clone() })
    }
}

/// Per-component mean squared loss gradient over `samples` utterances.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherEstimate {
    values: BTreeMap<String, Tensor>,
    samples: usize,
}

impl FisherEstimate {
    pub fn new(values: BTreeMap<String, Tensor>, samples: usize) -> Result<Self> {
        if values.values().any(|t| t.values().iter().any(|v| !(*v >= 0.0) || !v.is_finite())) {
            return Err(Error::InvalidArgument("Fisher values must be finite and non-negative".into()));
        }
        Ok(Self { values, samples })
    }

    pub fn get(&self, id: &str) -> Option<&Tensor> {
        self.values.get(id)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.values.iter()
    }

    pub fn summary(&self) -> FisherSummary {
        let all: Vec<f64> = self.values.values().flat_map(|t| t.values().iter().copied()).collect();
        FisherSummary {
            samples: self.samples,
            max: all.iter().copied().fold(0.0, f64::max),
            mean: all.iter().sum::<f64>() / all.len().max(1) as f64,
        }
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new("fisher", json!({ "samples": self.samples }));
        a.tensors = self.values.clone();
        a
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        archive.expect_kind("fisher")?;
        let samples = archive.metadata.get("samples").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        Self::new(archive.tensors.clone(), samples)
    }
}

/// Scale of a Fisher estimate, for reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherSummary {
    pub samples: usize,
    pub max: f64,
    pub mean: f64,
}

/// Empirical Fisher: `F_i = (1/N) Σ_n (∂loss_n/∂θ_i)²`, with utterance `n`
/// taken as `corpus[n mod |corpus|]` and the loss at its reference labels.
pub fn estimate_fisher(model: &TransducerModel, corpus: &[LossInput<'_>], sample_count: usize) -> Result<FisherEstimate> {
    if corpus.is_empty() {
        return Err(Error::Empty("Fisher corpus"));
    }
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample_count must be at least 1".into()));
    }
    let mut sums: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.numel()]).collect();
    for n in 0..sample_count {
        let item = corpus[n % corpus.len()];
        let mut tape = Tape::new();
        let bindings = model.bind(&mut tape, ParamGroup::All);
        let (_, loss) = batch_loss(model, &mut tape, &bindings, &[item])?;
        let grads = tape.backward(loss)?;
        for (slot, sum) in sums.iter_mut().enumerate() {
            if let Some(g) = grads.raw(bindings.var(slot)) {
                for (s, v) in sum.iter_mut().zip(g) {
                    *s += v * v;
                }
            }
        }
    }
    let scale = 1.0 / sample_count as f64;
    let values = model
        .params()
        .iter()
        .zip(sums)
        .map(|(p, sum)| {
            let t = Tensor::new(p.value.shape().to_vec(), sum.into_iter().map(|s| s * scale).collect())?;
            Ok((p.id.clone(), t))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    FisherEstimate::new(values, sample_count)
}

fn check_ids(model: &TransducerModel, anchors: &AnchorParameters, fisher: &FisherEstimate) -> Result<()> {
    let ids: Vec<&str> = model.params().ids().collect();
    for (what, keys) in [("anchors", anchors.values.keys()), ("fisher", fisher.values.keys())] {
        let keys: Vec<&str> = keys.map(String::as_str).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if keys != sorted {
            return Err(Error::ParameterMismatch(format!("{what} ids do not match the model")));
        }
    }
    for p in model.params().iter() {
        let shape = p.value.shape();
        if anchors.values[&p.id].shape() != shape || fisher.values[&p.id].shape() != shape {
            return Err(Error::ParameterMismatch(format!("shape of {}", p.id)));
        }
    }
    Ok(())
}

/// Records `(λ/2) Σ_i F_i (θ_i − θ*_i)²` over every parameter. Frozen
/// parameters enter as constants, so they add a constant and receive no
/// gradient.
pub fn ewc_penalty(
    tape: &mut Tape,
    bindings: &Bindings,
    model: &TransducerModel,
    anchors: &AnchorParameters,
    fisher: &FisherEstimate,
    lambda: f64,
) -> Result<Var> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("penalty weight must be non-negative, got {lambda}")));
    }
    check_ids(model, anchors, fisher)?;
    let mut terms = Vec::with_capacity(model.params().len());
    for (slot, p) in model.params().iter().enumerate() {
        let anchor = tape.constant(anchors.values[&p.id].clone());
        let f = tape.constant(fisher.values[&p.id].clone());
        let diff = tape.sub(bindings.var(slot), anchor)?;
        let sq = tape.mul(diff, diff)?;
        let weighted = tape.mul(sq, f)?;
        let s = tape.sum(weighted)?;
        terms.push(tape.reshape(s, &[1])?);
    }
    let all = tape.concat_rows(&terms)?;
    let total = tape.sum(all)?;
    tape.scale(total, 0.5 * lambda)
}

/// Penalty value without a tape.
pub fn penalty_value(model: &TransducerModel, anchors: &AnchorParameters, fisher: &FisherEstimate, lambda: f64) -> Result<f64> {
    check_ids(model, anchors, fisher)?;
    let mut total = 0.0;
    for p in model.params().iter() {
        let (a, f) = (&anchors.values[&p.id], &fisher.values[&p.id]);
        total += p.value.values().iter().zip(a.values()).zip(f.values()).map(|((t, a), f)| f * (t - a) * (t - a)).sum::<f64>();
    }
    Ok(0.5 * lambda * total)
}
