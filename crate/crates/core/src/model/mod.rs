//! The transducer network: an LSTM acoustic encoder, an LSTM prediction
//! network over emitted graphemes (the "LM"), and a one-hidden-layer joint
//! network producing log-probabilities over graphemes plus blank.

mod checkpoint;
mod config;
mod groups;
mod infer;
mod lstm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_archive, save_archive, TensorArchive};
pub use config::ModelConfig;
pub use groups::{Component, ParamGroup};
pub use infer::{LmState, PredictionCache};
pub use lstm::LstmSlots;

use crate::error::{Error, Result};
use crate::grad::{Bindings, ParamStore, Parameter, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct JointSlots {
    w_enc: usize,
    w_lm: usize,
    bias: usize,
    w_out: usize,
    bias_out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Layout {
    encoder: Vec<LstmSlots>,
    lm: Vec<LstmSlots>,
    joint: JointSlots,
    components: Vec<Component>,
}

/// Transducer parameters with their component grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct TransducerModel {
    config: ModelConfig,
    params: ParamStore,
    layout: Layout,
}

struct Builder<'a, R: Rng> {
    params: ParamStore,
    components: Vec<Component>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, id: String, shape: &[usize], component: Component) -> Result<usize> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| self.rng.gen_range(-0.1..=0.1)).collect();
        let slot = self.params.insert(Parameter::new(id, Tensor::new(shape.to_vec(), values)?))?;
        self.components.push(component);
        Ok(slot)
    }

    fn lstm(&mut self, prefix: &str, input: usize, cfg: &ModelConfig, component: Component) -> Result<LstmSlots> {
        let (h, p) = (cfg.hidden_units, cfg.projection_units);
        let slots = LstmSlots {
            w_ih: self.add(format!("{prefix}.w_ih"), &[input, 4 * h], component)?,
            w_hh: self.add(format!("{prefix}.w_hh"), &[p, 4 * h], component)?,
            bias: self.add(format!("{prefix}.bias"), &[4 * h], component)?,
            w_proj: self.add(format!("{prefix}.w_proj"), &[h, p], component)?,
        };
        // forget gate occupies the second quarter of the gate columns
        let bias = &mut self.params.get_mut(slots.bias).value;
        bias.values_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        Ok(slots)
    }
}

impl TransducerModel {
    /// Fresh model with weights uniform in [-0.1, 0.1] and forget-gate
    /// biases at 1.0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { params: ParamStore::new(), components: Vec::new(), rng: &mut rng };
        let mut encoder = Vec::with_capacity(config.encoder_layers);
        for layer in 0..config.encoder_layers {
            let input = config.encoder_input_width(layer);
            encoder.push(b.lstm(&format!("encoder.layer{layer}"), input, &config, Component::Encoder)?);
        }
        let mut lm = Vec::with_capacity(config.lm_layers);
        for layer in 0..config.lm_layers {
            let input = if layer == 0 { config.vocab_size } else { config.projection_units };
            lm.push(b.lstm(&format!("lm.layer{layer}"), input, &config, Component::Lm)?);
        }
        let (p, j, o) = (config.projection_units, config.joint_hidden, config.output_size());
        let joint = JointSlots {
            w_enc: b.add("joint.w_enc".into(), &[p, j], Component::Joint)?,
            w_lm: b.add("joint.w_lm".into(), &[p, j], Component::Joint)?,
            bias: b.add("joint.bias".into(), &[j], Component::Joint)?,
            w_out: b.add("joint.w_out".into(), &[j, o], Component::Joint)?,
            bias_out: b.add("joint.bias_out".into(), &[o], Component::Joint)?,
        };
        let Builder { params, components, .. } = b;
        Ok(Self { config, params, layout: Layout { encoder, lm, joint, components } })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn component(&self, slot: usize) -> Component {
        self.layout.components[slot]
    }

    /// Parameter ids belonging to `group`, in model order.
    pub fn select_trainable(&self, group: ParamGroup) -> Vec<String> {
        self.group_slots(group).into_iter().map(|s| self.params.get(s).id.clone()).collect()
    }

    pub fn group_slots(&self, group: ParamGroup) -> Vec<usize> {
        (0..self.params.len()).filter(|&s| group.contains(self.component(s))).collect()
    }

    /// Number of scalar weights in `group`.
    pub fn group_size(&self, group: ParamGroup) -> usize {
        self.group_slots(group).iter().map(|&s| self.params.get(s).numel()).sum()
    }

    /// Overwrite every parameter with `value`.
    pub fn fill(&mut self, value: f64) {
        self.params.iter_mut().for_each(|p| p.value.fill(value));
    }

    /// Binds parameters to `tape`; only `group` members receive gradients.
    pub fn bind(&self, tape: &mut Tape, group: ParamGroup) -> Bindings {
        let comps = &self.layout.components;
        self.params.bind(tape, |slot| group.contains(comps[slot]))
    }

    /// Binds only the parameters of `component`, trainable if `group`
    /// contains it.
    pub fn bind_component(&self, tape: &mut Tape, component: Component, group: ParamGroup) -> Bindings {
        let comps = &self.layout.components;
        let trainable = group.contains(component);
        self.params.bind_subset(tape, |slot| comps[slot] == component, |_| trainable)
    }

    /// Encoder forward for a batch of `[T_i × input_dim]` feature matrices.
    /// Returns one `[T'_i × projection_units]` output per utterance.
    ///
    /// Utterances are packed longest first and each step processes only the
    /// sequences still running, so no work is spent on padding.
    pub fn encode_batch(&self, tape: &mut Tape, b: &Bindings, inputs: &[Var]) -> Result<Vec<Var>> {
        let cfg = &self.config;
        if inputs.is_empty() {
            return Err(Error::Empty("encoder batch"));
        }
        let batch = inputs.len();
        let mut lengths = Vec::with_capacity(batch);
        let mut stacked = Vec::with_capacity(batch);
        for &x in inputs {
            let shape = tape.shape(x).to_vec();
            if shape.len() != 2 || shape[1] != cfg.input_dim {
                return Err(Error::ShapeMismatch {
                    op: "encode",
                    detail: format!("features {shape:?}, expected [T × {}]", cfg.input_dim),
                });
            }
            let frames = shape[0];
            if frames < cfg.frame_stack || cfg.encoded_length(frames) == 0 {
                return Err(Error::InvalidArgument(format!(
                    "{frames} frames is too short for frame_stack {} and the encoder stride",
                    cfg.frame_stack
                )));
            }
            let steps = frames.div_ceil(cfg.frame_stack);
            let padded = if steps * cfg.frame_stack > frames {
                let pad = tape.constant(Tensor::zeros(&[steps * cfg.frame_stack - frames, cfg.input_dim]));
                tape.concat_rows(&[x, pad])?
            } else {
                x
            };
            stacked.push(tape.reshape(padded, &[steps, cfg.frame_stack * cfg.input_dim])?);
            lengths.push(steps);
        }
        let all = tape.concat_rows(&stacked)?;
        let mut starts = Vec::with_capacity(batch);
        let mut acc = 0;
        for &l in &lengths {
            starts.push(acc);
            acc += l;
        }
        let mut pack = Packing::new(&lengths);
        let starts = &starts;
        let index: Vec<Option<usize>> = (0..pack.steps())
            .flat_map(|t| pack.order[..pack.active[t]].iter().map(move |&i| Some(starts[i] + t)))
            .collect();
        let mut seq = tape.gather_rows(all, index)?;
        for (layer, slots) in self.layout.encoder.iter().enumerate() {
            let outputs = lstm::run_layer(tape, b, slots, seq, &pack.active)?;
            if cfg.encoder_stride_after == Some(layer + 1) {
                pack = pack.halved();
                if pack.steps() == 0 {
                    return Err(Error::InvalidArgument("encoder stride leaves no frames".into()));
                }
                let pairs = (0..pack.steps())
                    .map(|t| {
                        let rows = pack.active[t];
                        let even = first_rows(tape, outputs[2 * t], rows)?;
                        let odd = first_rows(tape, outputs[2 * t + 1], rows)?;
                        tape.concat_cols(&[even, odd])
                    })
                    .collect::<Result<Vec<_>>>()?;
                seq = tape.concat_rows(&pairs)?;
            } else {
                seq = tape.concat_rows(&outputs)?;
            }
        }
        pack.unpack(tape, seq)
    }

    pub fn encode(&self, tape: &mut Tape, b: &Bindings, features: Var) -> Result<Var> {
        Ok(self.encode_batch(tape, b, &[features])?.remove(0))
    }

    /// Prediction-network forward for a batch of label sequences. Output
    /// `i` is `[(U_i + 1) × projection_units]`; row 0 is the zero-history
    /// state and row `u` the state after consuming `u` labels.
    pub fn predict_batch(&self, tape: &mut Tape, b: &Bindings, labels: &[&[usize]]) -> Result<Vec<Var>> {
        let cfg = &self.config;
        if labels.is_empty() {
            return Err(Error::Empty("label batch"));
        }
        for seq in labels {
            if let Some(&id) = seq.iter().find(|&&id| id >= cfg.vocab_size) {
                return Err(Error::LabelOutOfRange { id, vocab: cfg.vocab_size });
            }
        }
        let lengths: Vec<usize> = labels.iter().map(|s| s.len() + 1).collect();
        let pack = Packing::new(&lengths);
        let index: Vec<Option<usize>> = (0..pack.steps())
            .flat_map(|u| pack.order[..pack.active[u]].iter().map(move |&i| if u == 0 { None } else { Some(labels[i][u - 1]) }))
            .collect();
        let first = &self.layout.lm[0];
        let embedded = tape.gather_rows(b.var(first.w_ih), index)?;
        let mut outputs = lstm::run_layer_projected(tape, b, first, embedded, &pack.active)?;
        for slots in &self.layout.lm[1..] {
            let seq = tape.concat_rows(&outputs)?;
            outputs = lstm::run_layer(tape, b, slots, seq, &pack.active)?;
        }
        let seq = tape.concat_rows(&outputs)?;
        pack.unpack(tape, seq)
    }

    pub fn predict(&self, tape: &mut Tape, b: &Bindings, labels: &[usize]) -> Result<Var> {
        Ok(self.predict_batch(tape, b, &[labels])?.remove(0))
    }

    /// Full joint lattice: `[(T'·(U+1)) × (V+1)]` log-probabilities, row
    /// `t·(U+1) + u` for the pair (encoder step t, prediction state u).
    pub fn joint_lattice(&self, tape: &mut Tape, b: &Bindings, enc: Var, pred: Var) -> Result<Var> {
        let j = &self.layout.joint;
        let e = tape.matmul(enc, b.var(j.w_enc))?;
        let l = tape.matmul(pred, b.var(j.w_lm))?;
        let sum = tape.pairwise_add(e, l)?;
        let pre = tape.add_row(sum, b.var(j.bias))?;
        let hidden = tape.tanh(pre)?;
        let logits = tape.matmul(hidden, b.var(j.w_out))?;
        let logits = tape.add_row(logits, b.var(j.bias_out))?;
        tape.log_softmax(logits)
    }

    /// Joint output for one (encoder vector, prediction vector) pair, both
    /// `[1 × projection_units]`.
    pub fn joint(&self, tape: &mut Tape, b: &Bindings, enc_t: Var, lm_u: Var) -> Result<Var> {
        let p = self.config.projection_units;
        for v in [enc_t, lm_u] {
            if tape.value(v).len() != p {
                return Err(Error::ShapeMismatch {
                    op: "joint",
                    detail: format!("expected {p}-wide vector, got {:?}", tape.shape(v)),
                });
            }
        }
        let enc_t = tape.reshape(enc_t, &[1, p])?;
        let lm_u = tape.reshape(lm_u, &[1, p])?;
        self.joint_lattice(tape, b, enc_t, lm_u)
    }

    /// Tape-free encoder forward used by the decoders.
    pub fn encode_values(&self, features: &Tensor) -> Result<Tensor> {
        infer::encode(self, features)
    }

    /// Tape-free prediction network over a full label sequence.
    pub fn predict_values(&self, labels: &[usize]) -> Result<Tensor> {
        let mut state = self.lm_start();
        let mut rows = vec![state.output().to_vec()];
        for &l in labels {
            if l >= self.config.vocab_size {
                return Err(Error::LabelOutOfRange { id: l, vocab: self.config.vocab_size });
            }
            state = self.lm_step(&state, Some(l));
            rows.push(state.output().to_vec());
        }
        Tensor::from_rows(&rows)
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub(crate) fn value(&self, slot: usize) -> &[f64] {
        self.params.get(slot).value.values()
    }
}

/// Variable-length sequences packed time-major with the longest first, so
/// each recurrent step only touches sequences that are still running.
struct Packing {
    /// Batch indices by decreasing length; ties keep batch order.
    order: Vec<usize>,
    /// Lengths in packed order.
    lengths: Vec<usize>,
    /// Running sequences at each step.
    active: Vec<usize>,
    /// First packed row of each step.
    offsets: Vec<usize>,
}

impl Packing {
    fn new(lengths: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..lengths.len()).collect();
        order.sort_by(|&a, &b| lengths[b].cmp(&lengths[a]));
        let sorted = order.iter().map(|&i| lengths[i]).collect();
        Self::sorted(order, sorted)
    }

    fn sorted(order: Vec<usize>, lengths: Vec<usize>) -> Self {
        let steps = lengths.first().copied().unwrap_or(0);
        let active: Vec<usize> = (0..steps).map(|t| lengths.iter().take_while(|&&l| l > t).count()).collect();
        let offsets = active
            .iter()
            .scan(0, |acc, &a| {
                let start = *acc;
                *acc += a;
                Some(start)
            })
            .collect();
        Self { order, lengths, active, offsets }
    }

    fn steps(&self) -> usize {
        self.active.len()
    }

    /// The packing after a stride-two time reduction.
    fn halved(&self) -> Self {
        Self::sorted(self.order.clone(), self.lengths.iter().map(|l| l / 2).collect())
    }

    /// Splits a packed `[Σ active × d]` sequence into one `[length × d]`
    /// tensor per sequence, in batch order.
    fn unpack(&self, tape: &mut Tape, seq: Var) -> Result<Vec<Var>> {
        let mut rank = vec![0; self.order.len()];
        for (r, &i) in self.order.iter().enumerate() {
            rank[i] = r;
        }
        rank.into_iter()
            .map(|r| {
                let rows = (0..self.lengths[r]).map(|t| Some(self.offsets[t] + r)).collect();
                tape.gather_rows(seq, rows)
            })
            .collect()
    }
}

fn first_rows(tape: &mut Tape, x: Var, rows: usize) -> Result<Var> {
    if tape.value(x).rows() > rows {
        tape.slice_rows(x, 0, rows)
    } else {
        Ok(x)
    }
}

#[cfg(test)]
mod tests;
