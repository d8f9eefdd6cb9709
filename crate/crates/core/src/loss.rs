//! Transducer negative log-likelihood over the (T', U) alignment lattice.
//!
//! The forward variable is evaluated anti-diagonal by anti-diagonal on the
//! tape, so gradients come from the same reverse sweep as every other op.
//! Out-of-lattice terms use a large negative sentinel instead of −∞; the
//! stable log-add-exp never turns two sentinels into NaN.

use crate::error::{Error, Result};
use crate::grad::{Bindings, Gradients, ParamStore, Tape, Tensor, Var};
use crate::model::{Component, ParamGroup, TransducerModel};

/// Stand-in for log(0). Never produced by a log-softmax on finite input.
pub const LOG_ZERO: f64 = -1e30;

/// Per-node blank and label log-probabilities.
///
/// `blank` is a flat `T'·(U+1)` vector indexed `t·(U+1) + u`; `label` is a
/// flat `T'·U` vector indexed `t·U + u` holding the log-probability of the
/// `(u+1)`-th reference label at node (t, u).
#[derive(Clone, Copy, Debug)]
pub struct LogLattice {
    pub blank: Var,
    pub label: Option<Var>,
    pub frames: usize,
    pub labels: usize,
}

impl LogLattice {
    /// Records explicit lattice tensors as differentiable leaves.
    /// `blank` is `[T' × (U+1)]`, `label` is `[T' × U]` (absent for U = 0).
    pub fn from_tensors(tape: &mut Tape, blank: &Tensor, label: Option<&Tensor>) -> Result<Self> {
        let (frames, cols) = match blank.shape() {
            [t, c] => (*t, *c),
            _ => return Err(Error::InvalidArgument(format!("blank lattice shape {:?}", blank.shape()))),
        };
        let labels = cols - 1;
        let check = |t: &Tensor| t.values().iter().all(|v| v.is_finite() && *v <= 0.0);
        if !check(blank) {
            return Err(Error::InvalidArgument("lattice entries must be finite log-probabilities".into()));
        }
        let label = match (labels, label) {
            (0, None) => None,
            (u, Some(l)) if l.shape() == [frames, u] => {
                if !check(l) {
                    return Err(Error::InvalidArgument("lattice entries must be finite log-probabilities".into()));
                }
                let v = tape.leaf(Tensor::vector(l.values().to_vec()));
                Some(v)
            }
            _ => return Err(Error::InvalidArgument("label lattice must be [T' × U]".into())),
        };
        let blank = tape.leaf(Tensor::vector(blank.values().to_vec()));
        Ok(Self { blank, label, frames, labels })
    }

    /// Picks blank and reference-label entries out of a joint lattice of
    /// shape `[(T'·(U+1)) × (V+1)]`.
    pub fn from_joint(tape: &mut Tape, joint: Var, frames: usize, targets: &[usize], blank_id: usize) -> Result<Self> {
        let u1 = targets.len() + 1;
        let width = tape.value(joint).cols();
        if tape.value(joint).rows() != frames * u1 || blank_id >= width {
            return Err(Error::ShapeMismatch {
                op: "lattice",
                detail: format!("joint {:?} for T'={frames}, U={}", tape.shape(joint), targets.len()),
            });
        }
        let blank_idx = (0..frames * u1).map(|n| Some(n * width + blank_id)).collect();
        let blank = tape.gather(joint, blank_idx, 0.0)?;
        let label = if targets.is_empty() {
            None
        } else {
            let idx = (0..frames)
                .flat_map(|t| targets.iter().enumerate().map(move |(u, &y)| (t * u1 + u) * width + y))
                .map(Some)
                .collect();
            Some(tape.gather(joint, idx, 0.0)?)
        };
        Ok(Self { blank, label, frames, labels: targets.len() })
    }
}

/// `−log P(y | x)` summed over all monotone alignments of the lattice.
pub fn transducer_loss(tape: &mut Tape, lattice: &LogLattice) -> Result<Var> {
    let (t_len, u_len) = (lattice.frames, lattice.labels);
    if t_len == 0 {
        return Err(Error::Empty("lattice"));
    }
    let u1 = u_len + 1;
    let mut alpha = tape.constant(Tensor::scalar(0.0));
    // alpha holds α on diagonal d for u in [lo, hi]
    let (mut lo, mut hi) = (0usize, 0usize);
    for d in 1..(t_len + u_len) {
        let new_lo = d.saturating_sub(t_len - 1);
        let new_hi = d.min(u_len);
        let width = new_hi - new_lo + 1;
        let mut from_blank_alpha = Vec::with_capacity(width);
        let mut from_blank = Vec::with_capacity(width);
        let mut from_label_alpha = Vec::with_capacity(width);
        let mut from_label = Vec::with_capacity(width);
        for u in new_lo..=new_hi {
            let t = d - u;
            // (t-1, u) --blank--> (t, u)
            if t >= 1 && u >= lo && u <= hi {
                from_blank_alpha.push(Some(u - lo));
                from_blank.push(Some((t - 1) * u1 + u));
            } else {
                from_blank_alpha.push(None);
                from_blank.push(None);
            }
            // (t, u-1) --label--> (t, u)
            if u >= 1 && u - 1 >= lo && u - 1 <= hi {
                from_label_alpha.push(Some(u - 1 - lo));
                from_label.push(Some(t * u_len + (u - 1)));
            } else {
                from_label_alpha.push(None);
                from_label.push(None);
            }
        }
        let a1 = tape.gather(alpha, from_blank_alpha, LOG_ZERO)?;
        let b1 = tape.gather(lattice.blank, from_blank, LOG_ZERO)?;
        let term_blank = tape.add(a1, b1)?;
        let alpha_next = match lattice.label {
            Some(label) => {
                let a2 = tape.gather(alpha, from_label_alpha, LOG_ZERO)?;
                let l2 = tape.gather(label, from_label, LOG_ZERO)?;
                let term_label = tape.add(a2, l2)?;
                tape.log_add_exp(term_blank, term_label)?
            }
            None => term_blank,
        };
        alpha = alpha_next;
        lo = new_lo;
        hi = new_hi;
    }
    // the final diagonal holds only (T'-1, U)
    debug_assert_eq!((lo, hi), (u_len, u_len));
    let last = tape.gather(alpha, vec![Some(0)], 0.0)?;
    let final_blank = tape.gather(lattice.blank, vec![Some((t_len - 1) * u1 + u_len)], 0.0)?;
    let log_p = tape.add(last, final_blank)?;
    tape.scale(log_p, -1.0)
}

/// Gradient of the loss with respect to every lattice entry, as
/// `(d blank [T'·(U+1)], d label [T'·U])`.
pub fn transducer_grad(blank: &Tensor, label: Option<&Tensor>) -> Result<(f64, Tensor, Option<Tensor>)> {
    let mut tape = Tape::new();
    let lattice = LogLattice::from_tensors(&mut tape, blank, label)?;
    let loss = transducer_loss(&mut tape, &lattice)?;
    let grads = tape.backward(loss)?;
    let zeros_like = |v: Var| Tensor::zeros(tape.shape(v));
    let db = grads.get(lattice.blank).unwrap_or_else(|| zeros_like(lattice.blank));
    let dl = lattice.label.map(|l| grads.get(l).unwrap_or_else(|| zeros_like(l)));
    Ok((tape.value(loss).item(), db, dl))
}

/// Loss of an explicit lattice, without gradients.
pub fn lattice_loss(blank: &Tensor, label: Option<&Tensor>) -> Result<f64> {
    let mut tape = Tape::new();
    let lattice = LogLattice::from_tensors(&mut tape, blank, label)?;
    let loss = transducer_loss(&mut tape, &lattice)?;
    Ok(tape.value(loss).item())
}

/// One utterance prepared for the loss: features and target label ids.
#[derive(Clone, Copy, Debug)]
pub struct LossInput<'a> {
    pub features: &'a Tensor,
    pub targets: &'a [usize],
}

/// Records model forward and per-utterance losses for a batch. Returns
/// the individual losses and their mean.
pub fn batch_loss(
    model: &TransducerModel,
    tape: &mut Tape,
    bindings: &Bindings,
    batch: &[LossInput<'_>],
) -> Result<(Vec<Var>, Var)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let inputs: Vec<Var> = batch.iter().map(|b| tape.constant(b.features.clone())).collect();
    let enc = model.encode_batch(tape, bindings, &inputs)?;
    let labels: Vec<&[usize]> = batch.iter().map(|b| b.targets).collect();
    let pred = model.predict_batch(tape, bindings, &labels)?;
    let blank = model.config().blank();
    let mut losses = Vec::with_capacity(batch.len());
    for ((item, e), p) in batch.iter().zip(enc).zip(pred) {
        let frames = tape.value(e).rows();
        let joint = model.joint_lattice(tape, bindings, e, p)?;
        let lattice = LogLattice::from_joint(tape, joint, frames, item.targets, blank)?;
        losses.push(transducer_loss(tape, &lattice)?);
    }
    let stacked = tape.concat_rows(&losses)?;
    let total = tape.sum(stacked)?;
    let mean = tape.scale(total, 1.0 / batch.len() as f64)?;
    Ok((losses, mean))
}

/// Batch losses with their parameter gradients, ready to be added into a
/// parameter store.
#[derive(Debug)]
pub struct LossGradients {
    pub losses: Vec<f64>,
    pub mean: f64,
    parts: Vec<(Gradients, Bindings)>,
}

impl LossGradients {
    /// Adds the gradient of the mean loss into each bound `Parameter::grad`.
    pub fn accumulate_into(&self, params: &mut ParamStore) -> Result<()> {
        self.parts.iter().try_for_each(|(g, b)| params.accumulate(g, b))
    }
}

/// Mean loss of `batch` and its gradient with respect to the parameters
/// in `group`, equal to differentiating [`batch_loss`] but cache-friendly:
/// the encoder and prediction network run batched on one tape, while each
/// utterance's joint lattice is differentiated on a short tape of its own
/// whose input gradients are then pulled back through the batched tape.
pub fn batch_loss_gradients(model: &TransducerModel, group: ParamGroup, batch: &[LossInput<'_>]) -> Result<LossGradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut tape = Tape::new();
    let bindings = model.bind(&mut tape, group);
    let inputs: Vec<Var> = batch.iter().map(|b| tape.constant(b.features.clone())).collect();
    let enc = model.encode_batch(&mut tape, &bindings, &inputs)?;
    let labels: Vec<&[usize]> = batch.iter().map(|b| b.targets).collect();
    let pred = model.predict_batch(&mut tape, &bindings, &labels)?;
    let blank = model.config().blank();
    let weight = 1.0 / batch.len() as f64;
    let mut losses = Vec::with_capacity(batch.len());
    let mut parts = Vec::with_capacity(batch.len() + 1);
    let mut pullbacks = Vec::new();
    for ((item, &e), &p) in batch.iter().zip(&enc).zip(&pred) {
        let mut sub = Tape::new();
        let joint_bindings = model.bind_component(&mut sub, Component::Joint, group);
        let (se, sp) = (sub.leaf(tape.value(e).clone()), sub.leaf(tape.value(p).clone()));
        let frames = sub.value(se).rows();
        let joint = model.joint_lattice(&mut sub, &joint_bindings, se, sp)?;
        let lattice = LogLattice::from_joint(&mut sub, joint, frames, item.targets, blank)?;
        let loss = transducer_loss(&mut sub, &lattice)?;
        losses.push(sub.value(loss).item());
        let scaled = sub.scale(loss, weight)?;
        let grads = sub.backward(scaled)?;
        for (var, leaf) in [(e, se), (p, sp)] {
            if let Some(g) = grads.get(leaf) {
                let g = tape.constant(g);
                let dot = tape.mul(var, g)?;
                pullbacks.push(tape.sum(dot)?);
            }
        }
        parts.push((grads, joint_bindings));
    }
    if !pullbacks.is_empty() {
        let stacked = tape.concat_rows(&pullbacks)?;
        let surrogate = tape.sum(stacked)?;
        parts.push((tape.backward(surrogate)?, bindings));
    }
    let mean = losses.iter().sum::<f64>() * weight;
    Ok(LossGradients { losses, mean, parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::check::relative_error;
    use crate::harness::acceptance::{enumerate_alignments, toy_config};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random lattice whose blank and label probabilities at each node are
    /// part of one distribution, the rest going to other symbols.
    fn lattice(seed: u64, frames: usize, labels: usize) -> (Tensor, Option<Tensor>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut blank, mut label) = (Vec::new(), Vec::new());
        for _ in 0..frames {
            for u in 0..=labels {
                let b = rng.gen_range(0.05f64..0.95);
                let l = if u < labels { rng.gen_range(0.05f64..0.95) } else { 0.0 };
                let total = b + l + rng.gen_range(0.05f64..0.95);
                blank.push((b / total).ln());
                if u < labels {
                    label.push((l / total).ln());
                }
            }
        }
        let blank = Tensor::new(vec![frames, labels + 1], blank).unwrap();
        let label = (labels > 0).then(|| Tensor::new(vec![frames, labels], label).unwrap());
        (blank, label)
    }

    #[test]
    fn single_node_and_single_label_closed_forms() {
        let blank = Tensor::new(vec![1, 1], vec![-0.7]).unwrap();
        assert_eq!(lattice_loss(&blank, None).unwrap(), 0.7);
        let blank = Tensor::new(vec![1, 2], vec![-0.3, -0.2]).unwrap();
        let label = Tensor::new(vec![1, 1], vec![-1.1]).unwrap();
        assert!((lattice_loss(&blank, Some(&label)).unwrap() - 1.3).abs() < 1e-15);
        // two frames, one label: emit at t=0 or at t=1
        let blank = Tensor::new(vec![2, 2], vec![-0.5, -0.4, -0.6, -0.2]).unwrap();
        let label = Tensor::new(vec![2, 1], vec![-1.0, -0.9]).unwrap();
        let expected = -((-1.0f64 - 0.4 - 0.2).exp() + (-0.5f64 - 0.9 - 0.2).exp()).ln();
        assert!((lattice_loss(&blank, Some(&label)).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn lattice_gradient_matches_central_differences() {
        let (blank, label) = lattice(3, 3, 2);
        let label = label.unwrap();
        let (_, g_blank, g_label) = transducer_grad(&blank, Some(&label)).unwrap();
        let h = 1e-6;
        let mut numeric = Vec::new();
        for which in 0..2 {
            let base = if which == 0 { &blank } else { &label };
            for k in 0..base.len() {
                let mut probe = [blank.clone(), label.clone()];
                probe[which].values_mut()[k] += h;
                let up = lattice_loss(&probe[0], Some(&probe[1])).unwrap();
                probe[which].values_mut()[k] -= 2.0 * h;
                let down = lattice_loss(&probe[0], Some(&probe[1])).unwrap();
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let analytic: Vec<f64> = g_blank.values().iter().chain(g_label.unwrap().values()).copied().collect();
        assert!(relative_error(&analytic, &numeric) < 1e-8);
    }

    proptest! {
        #[test]
        fn dynamic_program_matches_enumeration(seed in any::<u64>(), frames in 1usize..5, labels in 0usize..4) {
            let (blank, label) = lattice(seed, frames, labels);
            let dp = lattice_loss(&blank, label.as_ref()).unwrap();
            prop_assert!((dp - enumerate_alignments(&blank, label.as_ref())).abs() < 1e-10);
            prop_assert!(dp >= 0.0);
        }
    }

    fn toy_batch(seed: u64) -> (TransducerModel, Vec<Tensor>, Vec<Vec<usize>>) {
        let model = TransducerModel::new(toy_config(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lengths = [14usize, 9, 17, 9];
        let features = lengths
            .iter()
            .map(|&t| Tensor::new(vec![t, 3], (0..3 * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let targets = vec![vec![0, 1, 2], vec![3], vec![2, 2, 0, 1], vec![]];
        (model, features, targets)
    }

    fn inputs<'a>(features: &'a [Tensor], targets: &'a [Vec<usize>]) -> Vec<LossInput<'a>> {
        features.iter().zip(targets).map(|(f, t)| LossInput { features: f, targets: t }).collect()
    }

    #[test]
    fn batching_does_not_change_per_utterance_losses() {
        let (model, features, targets) = toy_batch(5);
        let batch = inputs(&features, &targets);
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, ParamGroup::All);
        let (losses, _) = batch_loss(&model, &mut tape, &b, &batch).unwrap();
        for (i, item) in batch.iter().enumerate() {
            let mut single = Tape::new();
            let sb = model.bind(&mut single, ParamGroup::All);
            let (_, mean) = batch_loss(&model, &mut single, &sb, std::slice::from_ref(item)).unwrap();
            let (a, b) = (tape.value(losses[i]).item(), single.value(mean).item());
            assert!((a - b).abs() <= 1e-12 * b.abs(), "utterance {i}: {a} vs {b}");
        }
    }

    #[test]
    fn split_gradients_equal_full_tape_gradients() {
        let (model, features, targets) = toy_batch(8);
        let batch = inputs(&features, &targets);
        for group in [ParamGroup::All, ParamGroup::Joint, ParamGroup::Encoder] {
            let mut tape = Tape::new();
            let b = model.bind(&mut tape, group);
            let (_, mean) = batch_loss(&model, &mut tape, &b, &batch).unwrap();
            let mut full = model.params().clone();
            full.zero_grad();
            full.accumulate(&tape.backward(mean).unwrap(), &b).unwrap();

            let split = batch_loss_gradients(&model, group, &batch).unwrap();
            assert!((split.mean - tape.value(mean).item()).abs() < 1e-12);
            let mut params = model.params().clone();
            params.zero_grad();
            split.accumulate_into(&mut params).unwrap();
            let flat = |p: &ParamStore| p.iter().flat_map(|x| x.grad.values().to_vec()).collect::<Vec<_>>();
            assert!(relative_error(&flat(&params), &flat(&full)) < 1e-12, "{group}");
            for (p, q) in params.iter().zip(full.iter()) {
                assert_eq!(p.grad.values().iter().all(|g| *g == 0.0), q.grad.values().iter().all(|g| *g == 0.0), "{}", p.id);
            }
        }
    }
}
