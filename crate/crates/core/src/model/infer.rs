use std::collections::HashMap;

use super::{LstmSlots, TransducerModel};
use crate::error::{Error, Result};
use crate::grad::kernels::{log_softmax_in_place, matmul_into, sigmoid};
use crate::grad::Tensor;

/// Recurrent state of the prediction network after some label prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct LmState {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
    joint_proj: Vec<f64>,
}

impl LmState {
    /// Projected output of the last LM layer.
    pub fn output(&self) -> &[f64] {
        &self.layers.last().expect("at least one LM layer").0
    }
}

/// Memo of prediction states keyed by emitted label prefix.
#[derive(Debug, Default)]
pub struct PredictionCache {
    states: HashMap<Vec<usize>, LmState>,
}

impl PredictionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&mut self, model: &TransducerModel, prefix: &[usize]) -> LmState {
        if let Some(s) = self.states.get(prefix) {
            return s.clone();
        }
        let state = match prefix.split_last() {
            None => model.lm_start(),
            Some((&last, rest)) => {
                let prev = self.state(model, rest);
                model.lm_step(&prev, Some(last))
            }
        };
        self.states.insert(prefix.to_vec(), state.clone());
        state
    }
}

fn cell(
    model: &TransducerModel,
    slots: &LstmSlots,
    input_pre: &[f64],
    prev: Option<&(Vec<f64>, Vec<f64>)>,
) -> (Vec<f64>, Vec<f64>) {
    let cfg = model.config();
    let (h, p) = (cfg.hidden_units, cfg.projection_units);
    let bias = model.value(slots.bias);
    let mut z: Vec<f64> = input_pre.iter().zip(bias).map(|(x, b)| x + b).collect();
    if let Some((r, _)) = prev {
        let mut rec = vec![0.0; 4 * h];
        matmul_into(r, model.value(slots.w_hh), &mut rec, 1, p, 4 * h);
        for (a, b) in z.iter_mut().zip(&rec) {
            *a += b;
        }
    }
    let mut c = vec![0.0; h];
    let mut m = vec![0.0; h];
    for k in 0..h {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[h + k]);
        let g = z[2 * h + k].tanh();
        let o = sigmoid(z[3 * h + k]);
        let ig = i * g;
        c[k] = match prev {
            Some((_, c_prev)) => f * c_prev[k] + ig,
            None => ig,
        };
        m[k] = o * c[k].tanh();
    }
    let mut r = vec![0.0; p];
    matmul_into(&m, model.value(slots.w_proj), &mut r, 1, h, p);
    (r, c)
}

fn run_sequence(model: &TransducerModel, slots: &LstmSlots, rows: &[Vec<f64>], input: usize) -> Vec<Vec<f64>> {
    let gates = 4 * model.config().hidden_units;
    let mut state: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut out = Vec::with_capacity(rows.len());
    for x in rows {
        let mut pre = vec![0.0; gates];
        matmul_into(x, model.value(slots.w_ih), &mut pre, 1, input, gates);
        let next = cell(model, slots, &pre, state.as_ref());
        out.push(next.0.clone());
        state = Some(next);
    }
    out
}

pub(super) fn encode(model: &TransducerModel, features: &Tensor) -> Result<Tensor> {
    let cfg = model.config();
    if features.shape().len() != 2 || features.cols() != cfg.input_dim {
        return Err(Error::ShapeMismatch {
            op: "encode",
            detail: format!("features {:?}, expected [T × {}]", features.shape(), cfg.input_dim),
        });
    }
    let frames = features.rows();
    if frames < cfg.frame_stack || cfg.encoded_length(frames) == 0 {
        return Err(Error::InvalidArgument(format!("{frames} frames is too short for the encoder")));
    }
    let width = cfg.frame_stack * cfg.input_dim;
    let mut rows: Vec<Vec<f64>> = features
        .values()
        .chunks(width)
        .map(|c| {
            let mut r = c.to_vec();
            r.resize(width, 0.0);
            r
        })
        .collect();
    for (layer, slots) in model.layout().encoder.iter().enumerate() {
        let input = cfg.encoder_input_width(layer);
        let outputs = run_sequence(model, slots, &rows, input);
        rows = if cfg.encoder_stride_after == Some(layer + 1) {
            outputs.chunks_exact(2).map(|pair| pair.concat()).collect()
        } else {
            outputs
        };
    }
    Tensor::from_rows(&rows)
}

impl TransducerModel {
    /// Prediction state before any label has been emitted.
    pub fn lm_start(&self) -> LmState {
        self.lm_advance(None, None)
    }

    /// Advances the prediction network by one label.
    pub fn lm_step(&self, state: &LmState, label: Option<usize>) -> LmState {
        self.lm_advance(Some(state), label)
    }

    fn lm_advance(&self, state: Option<&LmState>, label: Option<usize>) -> LmState {
        let cfg = self.config();
        let gates = 4 * cfg.hidden_units;
        let mut layers = Vec::with_capacity(cfg.lm_layers);
        let mut below: Vec<f64> = Vec::new();
        for (layer, slots) in self.layout().lm.iter().enumerate() {
            let pre = if layer == 0 {
                match label {
                    Some(l) => self.value(slots.w_ih)[l * gates..(l + 1) * gates].to_vec(),
                    None => vec![0.0; gates],
                }
            } else {
                let mut pre = vec![0.0; gates];
                matmul_into(&below, self.value(slots.w_ih), &mut pre, 1, cfg.projection_units, gates);
                pre
            };
            let next = cell(self, slots, &pre, state.map(|s| &s.layers[layer]));
            below = next.0.clone();
            layers.push(next);
        }
        let j = &self.layout().joint;
        let mut joint_proj = vec![0.0; cfg.joint_hidden];
        matmul_into(&below, self.value(j.w_lm), &mut joint_proj, 1, cfg.projection_units, cfg.joint_hidden);
        LmState { layers, joint_proj }
    }

    /// `enc · W_enc` for every encoder step, the encoder half of the joint.
    pub fn joint_encoder_projection(&self, enc: &Tensor) -> Vec<Vec<f64>> {
        let cfg = self.config();
        let w = self.value(self.layout().joint.w_enc);
        (0..enc.rows())
            .map(|t| {
                let mut out = vec![0.0; cfg.joint_hidden];
                matmul_into(enc.row(t), w, &mut out, 1, cfg.projection_units, cfg.joint_hidden);
                out
            })
            .collect()
    }

    /// Log-probabilities over graphemes plus blank for one lattice node.
    pub fn joint_values(&self, enc_proj: &[f64], lm: &LmState) -> Vec<f64> {
        let cfg = self.config();
        let j = &self.layout().joint;
        let bias = self.value(j.bias);
        let hidden: Vec<f64> = enc_proj
            .iter()
            .zip(&lm.joint_proj)
            .zip(bias)
            .map(|((e, l), b)| (e + l + b).tanh())
            .collect();
        let mut logits = vec![0.0; cfg.output_size()];
        matmul_into(&hidden, self.value(j.w_out), &mut logits, 1, cfg.joint_hidden, cfg.output_size());
        for (v, b) in logits.iter_mut().zip(self.value(j.bias_out)) {
            *v += b;
        }
        log_softmax_in_place(&mut logits);
        logits
    }
}
