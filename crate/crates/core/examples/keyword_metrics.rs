//! Word alignment, keyword precision/recall and name correction on a
//! reference/hypothesis pair with three name errors.

use std::collections::BTreeSet;

use rnnt_personalize::metrics::{align, keyword_pr, keyword_pr_by, EditOp};
use rnnt_personalize::sim::correct_names;
use rnnt_personalize::text;

fn main() -> anyhow::Result<()> {
    let reference = text::words("zhuge dan was from yangdu");
    let hypothesis = text::words("zhuge was from young zhuge");
    let names: BTreeSet<String> = ["zhuge", "dan", "yangdu"].map(String::from).into();

    let alignment = align(&reference, &hypothesis);
    for pair in &alignment.pairs {
        println!("{:<10} {:<10} {:?}", pair.reference.as_deref().unwrap_or("-"), pair.hypothesis.as_deref().unwrap_or("-"), pair.op);
    }
    println!(
        "substitutions {} deletions {} insertions {} (cost {})",
        alignment.count(EditOp::Substitution),
        alignment.count(EditOp::Deletion),
        alignment.count(EditOp::Insertion),
        alignment.cost()
    );

    let alignments = [alignment];
    let kw = keyword_pr(&alignments, &names);
    println!("names: N_r={} N_h={} N_c={} precision {:.3} recall {:.3}", kw.n_ref, kw.n_hyp, kw.n_correct, kw.precision, kw.recall);
    let other = keyword_pr_by(&alignments, |w| !names.contains(w));
    println!("other words: precision {:.3} recall {:.3}", other.precision, other.recall);

    println!("name-corrected transcript: {:?}", correct_names(&reference, &hypothesis, &names).join(" "));
    Ok(())
}
