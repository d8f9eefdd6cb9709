//! The transducer loss of a small random lattice, compared with the sum
//! over every monotone alignment, and its per-entry gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnnt_personalize::grad::Tensor;
use rnnt_personalize::harness::acceptance::enumerate_alignments;
use rnnt_personalize::loss::transducer_grad;

fn log_probs(rng: &mut impl Rng, frames: usize, cols: usize) -> anyhow::Result<Tensor> {
    let values = (0..frames * cols).map(|_| rng.gen_range(0.05f64..1.0).ln()).collect();
    Ok(Tensor::matrix(frames, cols, values)?)
}

fn main() -> anyhow::Result<()> {
    let (frames, labels) = (3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let blank = log_probs(&mut rng, frames, labels + 1)?;
    let label = log_probs(&mut rng, frames, labels)?;

    let (loss, d_blank, d_label) = transducer_grad(&blank, Some(&label))?;
    let oracle = enumerate_alignments(&blank, Some(&label));
    println!("T'={frames} U={labels}: dynamic program {loss:.15}");
    println!("           alignment enumeration {oracle:.15}");
    println!("           |difference| {:.1e}", (loss - oracle).abs());

    // each adjoint is minus the posterior probability of taking that transition
    println!("∂loss/∂blank(t, u):");
    for (t, row) in d_blank.values().chunks(labels + 1).enumerate() {
        println!("  t={t} {:?}", row.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>());
    }
    let d_label = d_label.expect("label lattice has U > 0 columns");
    let emitted: Vec<f64> = (0..labels).map(|u| -(0..frames).map(|t| d_label.values()[t * labels + u]).sum::<f64>()).collect();
    println!("each label is emitted exactly once: {emitted:?}");
    Ok(())
}
