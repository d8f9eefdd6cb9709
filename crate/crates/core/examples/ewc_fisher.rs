//! Estimates the empirical Fisher of a freshly initialized model on base
//! speech and shows how the EWC penalty weighs an equal-sized move along
//! important and unimportant parameters.

use rnnt_personalize::ewc::{estimate_fisher, penalty_value, AnchorParameters};
use rnnt_personalize::loss::LossInput;
use rnnt_personalize::model::{ModelConfig, TransducerModel};
use rnnt_personalize::sim::{SynthWorld, WorldConfig};
use rnnt_personalize::text;

fn main() -> anyhow::Result<()> {
    let world = SynthWorld::new(WorldConfig::default(), 1)?;
    let model = TransducerModel::new(ModelConfig::default(), 1)?;
    let mut rendered = Vec::new();
    for utt in world.base_train.iter().take(24) {
        rendered.push((world.render(utt, None)?, text::to_labels(&utt.transcript)?));
    }
    let corpus: Vec<LossInput<'_>> = rendered.iter().map(|(f, l)| LossInput { features: f, targets: l }).collect();

    let fisher = estimate_fisher(&model, &corpus, corpus.len())?;
    let summary = fisher.summary();
    println!("Fisher over {} utterances: max {:.3e}, mean {:.3e}", fisher.samples(), summary.max, summary.mean);
    let mut by_mass: Vec<(&String, f64)> = fisher.iter().map(|(id, t)| (id, t.sum() / t.len() as f64)).collect();
    by_mass.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (id, mean) in by_mass.iter().take(4) {
        println!("  {id:<22} mean F {mean:.3e}");
    }

    let anchors = AnchorParameters::from_model(&model);
    for (label, id) in [("most important", by_mass[0].0), ("least important", by_mass[by_mass.len() - 1].0)] {
        let mut moved = model.clone();
        let slot = moved.params().slot_of(id).expect("id comes from the model");
        moved.params_mut().get_mut(slot).value.values_mut().iter_mut().for_each(|v| *v += 0.01);
        for lambda in [1e2, 1e4] {
            println!("shift {label} tensor by 0.01, λ={lambda:.0e}: penalty {:.4e}", penalty_value(&moved, &anchors, &fisher, lambda)?);
        }
    }
    Ok(())
}
