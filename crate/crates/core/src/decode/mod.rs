//! Greedy and frame-synchronous beam decoding, with optional shallow-fusion
//! biasing toward a phrase list.

mod bias;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

pub use bias::{compile_bias, load_bias_phrases, BiasContext, BiasState};

use crate::error::{Error, Result};
use crate::grad::kernels::{argmax, log_add_exp};
use crate::grad::Tensor;
use crate::model::{LmState, TransducerModel};
use crate::text;

/// Cap on symbols emitted within a single encoder frame.
pub const MAX_SYMBOLS_PER_FRAME: usize = 5;

/// What a decoder needs from a transducer: per-frame output distributions
/// conditioned on a label-history state.
pub trait Scorer {
    type State: Clone;

    fn frames(&self) -> usize;
    fn blank(&self) -> usize;
    fn start(&self) -> Self::State;
    fn advance(&self, state: &Self::State, label: usize) -> Self::State;
    /// Log-probabilities over every output symbol, blank included.
    fn log_probs(&self, frame: usize, state: &Self::State) -> Vec<f64>;
}

/// A trained model applied to one utterance.
pub struct ModelScorer<'a> {
    model: &'a TransducerModel,
    enc_proj: Vec<Vec<f64>>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a TransducerModel, features: &Tensor) -> Result<Self> {
        let enc = model.encode_values(features)?;
        Ok(Self { model, enc_proj: model.joint_encoder_projection(&enc) })
    }
}

impl Scorer for ModelScorer<'_> {
    type State = LmState;

    fn frames(&self) -> usize {
        self.enc_proj.len()
    }

    fn blank(&self) -> usize {
        self.model.config().blank()
    }

    fn start(&self) -> LmState {
        self.model.lm_start()
    }

    fn advance(&self, state: &LmState, label: usize) -> LmState {
        self.model.lm_step(state, Some(label))
    }

    fn log_probs(&self, frame: usize, state: &LmState) -> Vec<f64> {
        self.model.joint_values(&self.enc_proj[frame], state)
    }
}

/// Repeatedly emits the most likely symbol until it is blank (or the
/// per-frame cap is hit), then moves to the next frame.
pub fn greedy_search<S: Scorer>(scorer: &S) -> Vec<usize> {
    let blank = scorer.blank();
    let mut state = scorer.start();
    let mut out = Vec::new();
    for t in 0..scorer.frames() {
        for _ in 0..MAX_SYMBOLS_PER_FRAME {
            let k = argmax(&scorer.log_probs(t, &state));
            if k == blank {
                break;
            }
            out.push(k);
            state = scorer.advance(&state, k);
        }
    }
    out
}

pub fn greedy_decode(model: &TransducerModel, features: &Tensor) -> Result<Vec<usize>> {
    Ok(greedy_search(&ModelScorer::new(model, features)?))
}

/// Greedy transcript as text.
pub fn greedy_transcript(model: &TransducerModel, features: &Tensor) -> Result<String> {
    Ok(text::from_labels(&greedy_decode(model, features)?))
}

/// A ranked decoding result. `score = model_score + bias_score`, where the
/// bias component only counts fully matched phrases.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub text: String,
    pub score: f64,
    pub model_score: f64,
    pub bias_score: f64,
}

#[derive(Clone)]
struct Hyp<S> {
    labels: Vec<usize>,
    model: f64,
    bias: Option<BiasState>,
    state: S,
}

impl<S> Hyp<S> {
    fn bias_score(&self) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b.banked() + b.pending())
    }

    fn total(&self) -> f64 {
        match &self.bias {
            Some(_) => self.model + self.bias_score(),
            None => self.model,
        }
    }
}

/// Higher score first; ties go to the lexicographically smaller label
/// sequence, so lower grapheme ids and then shorter hypotheses win.
fn rank(a_score: f64, a_labels: &[usize], b_score: f64, b_labels: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_labels.cmp(b_labels))
}

/// Frame-synchronous beam search. Hypotheses that end a frame with the
/// same emitted string are merged by adding their model probabilities.
pub fn beam_search<S: Scorer>(scorer: &S, beam_width: usize, bias: Option<&BiasContext>) -> Result<Vec<Hypothesis>> {
    if beam_width < 1 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let blank = scorer.blank();
    let mut beam = vec![Hyp { labels: Vec::new(), model: 0.0, bias: bias.map(|b| b.start()), state: scorer.start() }];
    for t in 0..scorer.frames() {
        let mut ended: BTreeMap<Vec<usize>, Hyp<S::State>> = BTreeMap::new();
        let mut frontier = beam;
        for level in 0..=MAX_SYMBOLS_PER_FRAME {
            let mut candidates: Vec<(usize, usize, f64, Option<BiasState>, f64)> = Vec::new();
            for (h_idx, h) in frontier.iter().enumerate() {
                let lp = scorer.log_probs(t, &h.state);
                let finished = h.model + lp[blank];
                match ended.get_mut(&h.labels) {
                    Some(existing) => existing.model = log_add_exp(existing.model, finished),
                    None => {
                        ended.insert(h.labels.clone(), Hyp { model: finished, ..h.clone() });
                    }
                }
                if level == MAX_SYMBOLS_PER_FRAME {
                    continue;
                }
                for (k, &p) in lp.iter().enumerate() {
                    if k == blank {
                        continue;
                    }
                    let model = h.model + p;
                    let (state, total) = match (&h.bias, bias) {
                        (Some(st), Some(ctx)) => {
                            let mut st = st.clone();
                            ctx.advance(&mut st, k);
                            let total = model + (st.banked() + st.pending());
                            (Some(st), total)
                        }
                        _ => (None, model),
                    };
                    candidates.push((h_idx, k, model, state, total));
                }
            }
            if candidates.is_empty() {
                break;
            }
            let key = |c: &(usize, usize, f64, Option<BiasState>, f64)| {
                let mut l = frontier[c.0].labels.clone();
                l.push(c.1);
                l
            };
            let mut keyed: Vec<_> = candidates.into_iter().map(|c| (key(&c), c)).collect();
            keyed.sort_by(|a, b| rank(a.1 .4, &a.0, b.1 .4, &b.0));
            keyed.truncate(beam_width);
            frontier = keyed
                .into_iter()
                .map(|(labels, (h_idx, k, model, bias_state, _))| Hyp {
                    state: scorer.advance(&frontier[h_idx].state, k),
                    labels,
                    model,
                    bias: bias_state,
                })
                .collect();
        }
        let mut next: Vec<Hyp<S::State>> = ended.into_values().collect();
        next.sort_by(|a, b| rank(a.total(), &a.labels, b.total(), &b.labels));
        next.truncate(beam_width);
        beam = next;
    }
    let mut out: Vec<Hypothesis> = beam
        .into_iter()
        .map(|h| {
            // unfinished phrase credit is withdrawn at the end of the utterance
            let bias_score = h.bias.as_ref().map_or(0.0, BiasState::banked);
            let score = if h.bias.is_some() { h.model + bias_score } else { h.model };
            Hypothesis { text: text::from_labels(&h.labels), labels: h.labels, score, model_score: h.model, bias_score }
        })
        .collect();
    out.sort_by(|a, b| rank(a.score, &a.labels, b.score, &b.labels));
    Ok(out)
}

pub fn beam_decode(
    model: &TransducerModel,
    features: &Tensor,
    beam_width: usize,
    bias: Option<&BiasContext>,
) -> Result<Vec<Hypothesis>> {
    beam_search(&ModelScorer::new(model, features)?, beam_width, bias)
}

#[cfg(test)]
mod tests;
