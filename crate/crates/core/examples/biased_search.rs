//! Shallow-fusion biasing with a grapheme trie: a scripted scorer prefers
//! "jon", and boosting the phrase "joan" flips the beam's top hypothesis.
//! A partial match that dies is rolled back to zero net credit.

use rnnt_personalize::decode::{beam_search, BiasContext, Scorer};
use rnnt_personalize::text;

/// Fixed per-step distributions over `a..z`, space, apostrophe and blank,
/// keyed by how many labels have been emitted.
struct Scripted {
    steps: Vec<Vec<(char, f64)>>,
}

impl Scorer for Scripted {
    type State = usize;

    fn frames(&self) -> usize {
        self.steps.len() + 1
    }

    fn blank(&self) -> usize {
        28
    }

    fn start(&self) -> usize {
        0
    }

    fn advance(&self, emitted: &usize, _label: usize) -> usize {
        emitted + 1
    }

    fn log_probs(&self, _frame: usize, emitted: &usize) -> Vec<f64> {
        let mut p = vec![1e-4; 29];
        match self.steps.get(*emitted) {
            Some(choices) => {
                for &(c, w) in choices {
                    p[text::grapheme_id(c).unwrap()] = w;
                }
            }
            None => p[28] = 1.0,
        }
        let total: f64 = p.iter().sum();
        p.iter().map(|v| (v / total).ln()).collect()
    }
}

fn main() -> anyhow::Result<()> {
    let scorer = Scripted {
        steps: vec![vec![('j', 1.0)], vec![('o', 1.0)], vec![('n', 0.6), ('a', 0.4)], vec![('n', 1.0)]],
    };
    for boost in [0.0, 0.5, 1.5] {
        let bias = BiasContext::new(&["joan"], boost, 2.0 * boost)?;
        let top = beam_search(&scorer, 4, Some(&bias))?.remove(0);
        println!("boost {boost:.1}: {:<6} model {:+.3} bias {:+.3}", format!("{:?}", top.text), top.model_score, top.bias_score);
    }

    let bias = BiasContext::new(&["joan"], 1.0, 2.0)?;
    let mut state = bias.start();
    for c in "jok ".chars() {
        let delta = bias.advance(&mut state, text::grapheme_id(c)?);
        println!("after {c:?}: step credit {delta:+.1}, pending {:.1}, banked {:.1}", state.pending(), state.banked());
    }
    Ok(())
}
