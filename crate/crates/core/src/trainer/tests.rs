use super::*;
use crate::decode::greedy_decode;
use crate::model::ModelConfig;
use crate::sim::{RenderMode, SynthWorld, WorldConfig};

#[test]
fn zero_momentum_is_plain_sgd() {
    let mut theta = vec![1.0, -2.0];
    let mut v = vec![0.0; 2];
    momentum_step(&mut theta, &[0.5, 1.0], &mut v, 0.1, 0.0);
    assert_eq!(theta, vec![1.0 - 0.1 * 0.5, -2.0 - 0.1 * 1.0]);
}

#[test]
fn constant_gradient_velocity_is_geometric() {
    let (g, mu) = (0.7, 0.9);
    let mut theta = vec![0.0];
    let mut v = vec![0.0];
    for k in 1..=6 {
        momentum_step(&mut theta, &[g], &mut v, 0.01, mu);
        let want = g * (1.0 - f64::powi(mu, k)) / (1.0 - mu);
        assert!((v[0] - want).abs() < 1e-14);
    }
}

#[test]
fn two_steps_on_a_quadratic() {
    // L = ½(θ − 3)², θ0 = 5, lr = 0.1, μ = 0.5
    let (lr, mu) = (0.1, 0.5);
    let mut theta = vec![5.0];
    let mut v = vec![0.0];
    for _ in 0..2 {
        let g = theta[0] - 3.0;
        momentum_step(&mut theta, &[g], &mut v, lr, mu);
    }
    // step 1: v = 2, θ = 4.8; step 2: g = 1.8, v = 0.5·2 + 1.8 = 2.8, θ = 4.52
    assert!((v[0] - 2.8).abs() < 1e-15);
    assert!((theta[0] - 4.52).abs() < 1e-15);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig::production_recipe().validate().is_ok());
}

struct Fixture {
    world: SynthWorld,
    model: TransducerModel,
    cache: TrainingCache,
    suite: EvalSuite,
}

fn fixture(n: usize) -> Fixture {
    let world = SynthWorld::new(WorldConfig::default(), 11).unwrap();
    let model = TransducerModel::new(ModelConfig::default(), 5).unwrap();
    let mut cache = TrainingCache::new(64).unwrap();
    let mut suite = EvalSuite::default();
    for utt in world.base_train.iter().take(n) {
        let f = world.render(utt, None).unwrap();
        suite.user_test.push(f.clone(), &utt.transcript);
        cache.append(utt.id.clone(), f, &utt.transcript, "supervised").unwrap();
    }
    Fixture { world, model, cache, suite }
}

#[test]
fn training_leaves_frozen_groups_bit_identical() {
    let fx = fixture(3);
    for group in ParamGroup::ALL {
        let config = TrainConfig { epochs: 1, batch_size: 2, trainable_group: group, ..TrainConfig::default() };
        let (tuned, _) = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap();
        for (slot, (before, after)) in fx.model.params().iter().zip(tuned.params().iter()).enumerate() {
            if group.contains(fx.model.component(slot)) {
                assert_ne!(before.value, after.value, "{group}: {} did not move", before.id);
            } else {
                assert_eq!(before.value, after.value, "{group}: {} moved", before.id);
            }
        }
    }
}

#[test]
fn vanishing_learning_rate_keeps_metrics() {
    let fx = fixture(2);
    let config = TrainConfig { epochs: 2, learning_rate: 1e-300, ..TrainConfig::default() };
    let (tuned, report) = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap();
    assert_eq!(tuned.params(), fx.model.params());
    for e in &report.epochs {
        assert_eq!(e.eval.user.wer, report.initial.user.wer);
    }
}

#[test]
fn personalization_is_deterministic() {
    let fx = fixture(3);
    let config = TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::default() };
    let (a, ra) = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap();
    let (b, rb) = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.without_timing(), rb.without_timing());
    assert_eq!(ra.epochs.len(), 2);
}

#[test]
fn rejects_bad_sessions() {
    let fx = fixture(1);
    let empty = TrainingCache::new(1).unwrap().snapshot();
    assert!(matches!(personalize(&fx.model, &empty, &fx.suite, &TrainConfig::default(), None), Err(Error::Empty(_))));
    let config = TrainConfig { lambda: 1.0, ..TrainConfig::default() };
    assert!(personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).is_err());
}

#[test]
fn divergence_is_reported() {
    let fx = fixture(2);
    let config = TrainConfig { epochs: 3, learning_rate: 1e300, patience: None, ..TrainConfig::default() };
    let err = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
}

#[test]
fn overfits_a_single_utterance() {
    let fx = fixture(1);
    let snapshot = fx.cache.snapshot();
    let entry = &snapshot.entries()[0];
    let examples = [LossInput { features: &entry.features, targets: &entry.labels }];
    let mut model = fx.model.clone();
    let config = TrainConfig { epochs: 200, batch_size: 1, learning_rate: 0.05, clip_norm: Some(5.0), ..TrainConfig::default() };
    let (losses, _) = train_epochs(&mut model, &examples, &config, |_, _, _| true).unwrap();
    assert!(losses[losses.len() - 1] < 0.1 * losses[0], "{} -> {}", losses[0], losses[losses.len() - 1]);
    assert_eq!(greedy_decode(&model, &entry.features).unwrap(), entry.labels);
    // the fitted transcript also survives a fresh rendering of the same text
    let utt = &fx.world.base_train[0];
    let again = fx.world.synth_features(&utt.transcript, &fx.world.speakers[0], RenderMode::UserVoice, &utt.id).unwrap();
    assert_eq!(again, entry.features);
}

#[test]
fn early_stopping_returns_the_best_epoch() {
    let fx = fixture(4);
    let config = TrainConfig { epochs: 12, batch_size: 2, learning_rate: 0.3, patience: Some(2), ..TrainConfig::default() };
    let (tuned, report) = personalize(&fx.model, &fx.cache.snapshot(), &fx.suite, &config, None).unwrap();
    let returned = report.returned().user.wer;
    let best = report.epochs.iter().map(|e| e.eval.user.wer).fold(report.initial.user.wer, f64::min);
    assert!(returned <= best + 0.0);
    assert_eq!(fx.suite.user_test.evaluate(&tuned, &fx.suite.keywords).unwrap().wer, returned);
}

