//! One test per acceptance criterion. Each prints its `criterion N
//! [PASS|FAIL]` line before asserting.
//!
//! The experiment criteria share one base model, trained on first use; set
//! `PERSONALIZE_BASE_CHECKPOINT` to reuse one written by `personalize-bench
//! train-base`. Tests run one at a time so the throughput timing is not
//! disturbed by its neighbours.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, OnceLock};

use rnnt_personalize::harness::acceptance::{
    bias_neutrality, determinism, ewc_direction, golden_keyword_counts, golden_name_correction, gradient_suite,
    layer_direction, loss_oracle, supervision_ladder, throughput_direction, CriterionResult,
};
use rnnt_personalize::harness::{train_base, BaseConfig, Bench, ExperimentConfig};

#[global_allocator]
static ALLOCATOR: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Shared {
    bench: Bench,
    checkpoint: PathBuf,
    scratch: tempfile::TempDir,
}

fn exclusive() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let scratch = tempfile::tempdir().expect("temporary directory");
        let checkpoint = match std::env::var_os("PERSONALIZE_BASE_CHECKPOINT") {
            Some(path) => PathBuf::from(path),
            None => {
                let base = train_base(&BaseConfig::default()).expect("base training");
                base.save(scratch.path().join("base")).expect("saving the base model")
            }
        };
        let bench = Bench::load(&checkpoint).expect("loading the base model");
        Shared { bench, checkpoint, scratch }
    })
}

fn report(result: CriterionResult) {
    // written to the handle directly so the line survives output capture
    let _ = writeln!(std::io::stderr(), "{result}");
    assert!(result.passed, "{result}");
}

#[test]
fn criterion_01_golden_keyword_counts() {
    let _guard = exclusive();
    report(golden_keyword_counts());
}

#[test]
fn criterion_02_golden_name_correction() {
    let _guard = exclusive();
    report(golden_name_correction());
}

#[test]
fn criterion_03_loss_matches_enumeration() {
    let _guard = exclusive();
    report(loss_oracle(SEEDS[0]));
}

#[test]
fn criterion_04_gradient_suite() {
    let _guard = exclusive();
    report(gradient_suite(SEEDS[0]));
}

#[test]
fn criterion_05_ewc_direction() {
    let _guard = exclusive();
    report(ewc_direction(&shared().bench, &ExperimentConfig::default(), &SEEDS));
}

#[test]
fn criterion_06_layer_selection_direction() {
    let _guard = exclusive();
    report(layer_direction(&shared().bench, &ExperimentConfig::default(), &SEEDS));
}

#[test]
fn criterion_07_supervision_ladder() {
    let _guard = exclusive();
    report(supervision_ladder(&shared().bench, &ExperimentConfig::default(), &SEEDS));
}

#[test]
fn criterion_08_bias_neutrality() {
    let _guard = exclusive();
    report(bias_neutrality(SEEDS[0]));
}

#[test]
fn criterion_09_throughput_direction() {
    let _guard = exclusive();
    let shared = shared();
    report(throughput_direction(&shared.bench, &ExperimentConfig::default(), SEEDS[0]));
}

#[test]
fn criterion_10_determinism() {
    let _guard = exclusive();
    let s = shared();
    let scratch = s.scratch.path().join("rebuilt");
    report(determinism(&s.bench, &s.checkpoint, &ExperimentConfig::default(), SEEDS[0], &scratch));
}
