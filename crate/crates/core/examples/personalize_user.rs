//! Fine-tunes a trained base model on one simulated user's supervised
//! speech with an EWC anchor and reports per-epoch user and base WER.
//!
//! Usage: personalize_user [BASE_CHECKPOINT] [USER]; train the base first
//! with `personalize-bench train-base`.

use rnnt_personalize::harness::{Bench, UserData};
use rnnt_personalize::metrics::EvaluationReport;
use rnnt_personalize::model::ParamGroup;
use rnnt_personalize::sim::{build_condition, SupervisionTag};
use rnnt_personalize::trainer::{personalize, EvalSuite, EwcTerm, TrainConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let checkpoint = args.next().unwrap_or_else(|| "runs/base/base.ckpt".into());
    let user = args.next().map_or(Ok(0), |u| u.parse())?;
    let bench = Bench::load(&checkpoint)?;
    let data = UserData::new(&bench.world, user)?;
    println!("user {user}: names {:?}", data.profile.names);

    let cache = build_condition(SupervisionTag::Supervised, &bench.world, &data.profile, None, None, 1)?;
    let suite = EvalSuite { user_test: data.test.clone(), base_test: Some(bench.base_test.clone()), keywords: data.names.clone() };
    let config = TrainConfig { epochs: 6, trainable_group: ParamGroup::All, lambda: 1e2, patience: None, ..TrainConfig::default() };
    let ewc = EwcTerm { anchors: &bench.base.anchors, fisher: &bench.base.fisher };
    let (model, report) = personalize(&bench.base.model, &cache.snapshot(), &suite, &config, Some(ewc))?;

    let show = |epoch: usize, user: &EvaluationReport, base: f64| {
        println!("epoch {epoch:>2}: user WER {:.3} name recall {:.2} precision {:.2}  base WER {base:.3}", user.wer, user.keywords.recall, user.keywords.precision);
    };
    show(0, &report.initial.user, report.initial.base.as_ref().map_or(f64::NAN, |b| b.wer));
    for e in &report.epochs {
        println!("          mean loss {:.3}", e.mean_loss);
        show(e.epoch, &e.eval.user, e.eval.base.as_ref().map_or(f64::NAN, |b| b.wer));
    }

    let hyps = data.test.hypotheses(&model)?;
    for (r, h) in data.test.references.iter().zip(&hyps).take(3) {
        println!("  ref {:?}\n  hyp {:?}", r.join(" "), h.join(" "));
    }
    Ok(())
}
