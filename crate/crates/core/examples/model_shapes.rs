//! Builds the default transducer and traces one utterance through the
//! encoder, prediction network and joint lattice.

use rnnt_personalize::grad::{Tape, Tensor};
use rnnt_personalize::model::{ModelConfig, ParamGroup, TransducerModel};
use rnnt_personalize::text;

fn main() -> anyhow::Result<()> {
    let config = ModelConfig::default();
    let model = TransducerModel::new(config.clone(), 0)?;
    for group in ParamGroup::ALL {
        println!("{:>8}: {:>6} parameters", group.name(), model.group_size(group));
    }

    let frames = 37;
    let features = Tensor::new(
        vec![frames, config.input_dim],
        (0..frames * config.input_dim).map(|k| (k as f64 * 0.37).sin()).collect(),
    )?;
    let labels = text::to_labels("hello there")?;

    let mut tape = Tape::new();
    let b = model.bind(&mut tape, ParamGroup::All);
    let x = tape.constant(features.clone());
    let enc = model.encode(&mut tape, &b, x)?;
    let pred = model.predict(&mut tape, &b, &labels)?;
    let lattice = model.joint_lattice(&mut tape, &b, enc, pred)?;
    println!("features {:?} -> encoder {:?} (time reduction {})", features.shape(), tape.shape(enc), config.time_reduction());
    println!("{} labels -> prediction {:?}", labels.len(), tape.shape(pred));
    println!("joint lattice {:?} = T'·(U+1) rows × (V+1) outputs", tape.shape(lattice));

    let row = tape.value(lattice).row(0);
    println!("row 0 sums to {:.15} after exponentiation", row.iter().map(|v| v.exp()).sum::<f64>());
    let tape_free = model.encode_values(&features)?;
    println!("tape-free encoder matches: {}", &tape_free == tape.value(enc));
    Ok(())
}
