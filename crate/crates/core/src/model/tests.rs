use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn small_config() -> ModelConfig {
    ModelConfig {
        input_dim: 3,
        frame_stack: 2,
        encoder_layers: 2,
        encoder_stride_after: Some(1),
        lm_layers: 2,
        hidden_units: 4,
        projection_units: 3,
        joint_hidden: 5,
        vocab_size: 4,
    }
}

fn random_features(rng: &mut impl Rng, frames: usize, dim: usize) -> Tensor {
    Tensor::new(vec![frames, dim], (0..frames * dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

/// Plain-loop projected LSTM over `rows`, reading weights by id.
fn unrolled_layer(model: &TransducerModel, prefix: &str, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cfg = model.config();
    let (h, p) = (cfg.hidden_units, cfg.projection_units);
    let get = |name: &str| model.params().by_id(&format!("{prefix}.{name}")).unwrap().value.clone();
    let (w_ih, w_hh, bias, w_proj) = (get("w_ih"), get("w_hh"), get("bias"), get("w_proj"));
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let (mut r, mut c) = (vec![0.0; p], vec![0.0; h]);
    let mut out = Vec::new();
    for x in rows {
        let mut z = bias.values().to_vec();
        for (g, zg) in z.iter_mut().enumerate() {
            for (k, xk) in x.iter().enumerate() {
                *zg += xk * w_ih.at(k, g);
            }
            for (k, rk) in r.iter().enumerate() {
                *zg += rk * w_hh.at(k, g);
            }
        }
        let mut m = vec![0.0; h];
        for k in 0..h {
            c[k] = sig(z[h + k]) * c[k] + sig(z[k]) * z[2 * h + k].tanh();
            m[k] = sig(z[3 * h + k]) * c[k].tanh();
        }
        r = (0..p).map(|j| (0..h).map(|k| m[k] * w_proj.at(k, j)).sum()).collect();
        out.push(r.clone());
    }
    out
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.shape() == b.shape() && a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= tol)
}

fn tape_encode(model: &TransducerModel, features: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let x = tape.leaf(features.clone());
    let enc = model.encode(&mut tape, &b, x).unwrap();
    tape.value(enc).clone()
}

#[test]
fn stacking_and_stride_compress_time() {
    let cfg = ModelConfig { input_dim: 2, encoder_layers: 3, encoder_stride_after: Some(2), ..small_config() };
    let cfg = ModelConfig { frame_stack: 3, ..cfg };
    assert_eq!(cfg.encoded_length(12), 2);
    let model = TransducerModel::new(cfg, 0).unwrap();
    let features = random_features(&mut ChaCha8Rng::seed_from_u64(1), 12, 2);
    assert_eq!(model.encode_values(&features).unwrap().shape(), &[2, 3]);
    assert_eq!(tape_encode(&model, &features).shape(), &[2, 3]);
    // the odd stacked step is dropped, not padded
    assert_eq!(model.encode_values(&random_features(&mut ChaCha8Rng::seed_from_u64(2), 16, 2)).unwrap().rows(), 3);
    assert!(model.encode_values(&Tensor::zeros(&[2, 2])).is_err());
}

#[test]
fn zero_weights_encode_to_zero() {
    let mut model = TransducerModel::new(small_config(), 0).unwrap();
    model.fill(0.0);
    let enc = model.encode_values(&random_features(&mut ChaCha8Rng::seed_from_u64(3), 9, 3)).unwrap();
    assert_eq!(enc.shape(), &[2, 3]);
    assert!(enc.values().iter().all(|&v| v == 0.0));
}

#[test]
fn encoder_matches_unrolled_recurrence() {
    let cfg = ModelConfig { encoder_stride_after: None, ..small_config() };
    let model = TransducerModel::new(cfg.clone(), 7).unwrap();
    let features = random_features(&mut ChaCha8Rng::seed_from_u64(4), 7, 3);
    let mut rows: Vec<Vec<f64>> = features
        .values()
        .chunks(6)
        .map(|c| {
            let mut r = c.to_vec();
            r.resize(6, 0.0);
            r
        })
        .collect();
    for layer in 0..cfg.encoder_layers {
        rows = unrolled_layer(&model, &format!("encoder.layer{layer}"), &rows);
    }
    let expected = Tensor::from_rows(&rows).unwrap();
    assert!(close(&model.encode_values(&features).unwrap(), &expected, 1e-12));
    assert!(close(&tape_encode(&model, &features), &expected, 1e-12));
}

#[test]
fn prediction_matches_unrolled_recurrence() {
    let model = TransducerModel::new(small_config(), 8).unwrap();
    let labels = [2, 0, 3, 3, 1];
    let mut rows: Vec<Vec<f64>> = std::iter::once(vec![0.0; 4])
        .chain(labels.iter().map(|&l| (0..4).map(|k| if k == l { 1.0 } else { 0.0 }).collect()))
        .collect();
    for layer in 0..2 {
        rows = unrolled_layer(&model, &format!("lm.layer{layer}"), &rows);
    }
    let expected = Tensor::from_rows(&rows).unwrap();
    assert!(close(&model.predict_values(&labels).unwrap(), &expected, 1e-12));
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let pred = model.predict(&mut tape, &b, &labels).unwrap();
    assert!(close(tape.value(pred), &expected, 1e-12));
    assert!(model.predict_values(&[4]).is_err());
}

#[test]
fn prediction_rows_are_causal() {
    let model = TransducerModel::new(small_config(), 9).unwrap();
    assert_eq!(model.predict_values(&[]).unwrap().shape(), &[1, 3]);
    let a = model.predict_values(&[1, 2, 0]).unwrap();
    let b = model.predict_values(&[1, 2, 3, 3]).unwrap();
    assert_eq!(&a.values()[..9], &b.values()[..9]);
    assert_ne!(a.row(3), b.row(3));
}

#[test]
fn encoder_rows_ignore_future_frames() {
    let model = TransducerModel::new(small_config(), 10).unwrap();
    let r = model.config().time_reduction();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let features = random_features(&mut rng, 24, 3);
    let base = model.encode_values(&features).unwrap();
    for keep in 1..base.rows() {
        let mut perturbed = features.clone();
        for v in &mut perturbed.values_mut()[keep * r * 3..] {
            *v += rng.gen_range(-1.0..1.0);
        }
        let out = model.encode_values(&perturbed).unwrap();
        assert_eq!(&out.values()[..keep * 3], &base.values()[..keep * 3]);
        assert_ne!(out.row(keep), base.row(keep));
        assert_eq!(&tape_encode(&model, &perturbed).values()[..keep * 3], &tape_encode(&model, &features).values()[..keep * 3]);
    }
}

#[test]
fn batched_encoding_equals_single() {
    let model = TransducerModel::new(small_config(), 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let batch: Vec<Tensor> = [9, 16, 4, 16, 11].iter().map(|&t| random_features(&mut rng, t, 3)).collect();
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let inputs: Vec<Var> = batch.iter().map(|x| tape.leaf(x.clone())).collect();
    let outputs = model.encode_batch(&mut tape, &b, &inputs).unwrap();
    for (x, out) in batch.iter().zip(outputs) {
        assert_eq!(tape.value(out), &tape_encode(&model, x));
    }
}

#[test]
fn joint_is_normalized_and_uniform_at_zero() {
    let mut model = TransducerModel::new(small_config(), 14).unwrap();
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let e = tape.leaf(Tensor::vector(vec![0.3, -1.0, 2.0]));
    let l = tape.leaf(Tensor::vector(vec![1.5, 0.2, -0.7]));
    let out = model.joint(&mut tape, &b, e, l).unwrap();
    assert_eq!(tape.shape(out), &[1, 5]);
    assert!((tape.value(out).values().iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    let short = tape.leaf(Tensor::vector(vec![1.0]));
    assert!(model.joint(&mut tape, &b, short, l).is_err());

    model.fill(0.0);
    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let enc = tape.leaf(Tensor::filled(&[3, 3], 0.4));
    let pred = tape.leaf(Tensor::filled(&[2, 3], -0.9));
    let lattice = model.joint_lattice(&mut tape, &b, enc, pred).unwrap();
    assert_eq!(tape.shape(lattice), &[6, 5]);
    assert!(tape.value(lattice).values().iter().all(|&v| (v + 5f64.ln()).abs() < 1e-15));
}

#[test]
fn groups_partition_the_parameters() {
    let model = TransducerModel::new(small_config(), 15).unwrap();
    let ids = |g| model.select_trainable(g).into_iter().collect::<BTreeSet<_>>();
    let (enc, lm, joint) = (ids(ParamGroup::Encoder), ids(ParamGroup::Lm), ids(ParamGroup::Joint));
    assert!(enc.is_disjoint(&lm) && enc.is_disjoint(&joint) && lm.is_disjoint(&joint));
    assert_eq!(ids(ParamGroup::Decoder), lm.union(&joint).cloned().collect());
    let everything: BTreeSet<String> = model.params().ids().map(String::from).collect();
    assert_eq!(ids(ParamGroup::All), everything);
    assert_eq!(enc.len() + lm.len() + joint.len(), everything.len());
    let size = |g| model.group_size(g);
    assert_eq!(size(ParamGroup::All), size(ParamGroup::Encoder) + size(ParamGroup::Decoder));
    assert_eq!(size(ParamGroup::All), model.params().numel());
    assert!(joint.iter().all(|id| id.starts_with("joint.")));
}

#[test]
fn checkpoints_round_trip_bit_exact() {
    let model = TransducerModel::new(small_config(), 16).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let loaded = TransducerModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for (a, b) in loaded.params().iter().zip(model.params().iter()) {
        assert!(a.value.values().iter().zip(b.value.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
