use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{self, SPACE};

#[derive(Clone, Debug, Default, PartialEq)]
struct Node {
    children: BTreeMap<usize, usize>,
    terminal: bool,
}

/// Trie of bias phrases plus the per-grapheme and completion boosts.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasContext {
    nodes: Vec<Node>,
    phrases: Vec<String>,
    boost: f64,
    final_boost: f64,
}

impl BiasContext {
    /// Builds the trie. Phrases are normalized; duplicates collapse.
    pub fn new<S: AsRef<str>>(phrases: &[S], boost: f64, final_boost: f64) -> Result<Self> {
        if !(boost >= 0.0 && final_boost >= 0.0 && boost.is_finite() && final_boost.is_finite()) {
            return Err(Error::InvalidArgument(format!("boosts must be finite and non-negative, got {boost}, {final_boost}")));
        }
        let mut ctx = Self { nodes: vec![Node::default()], phrases: Vec::new(), boost, final_boost };
        for phrase in phrases {
            let phrase = text::normalize(phrase.as_ref());
            if phrase.is_empty() {
                return Err(Error::InvalidArgument("empty bias phrase".into()));
            }
            let labels = text::to_labels(&phrase)?;
            let mut node = 0;
            for l in labels {
                node = match ctx.nodes[node].children.get(&l) {
                    Some(&child) => child,
                    None => {
                        ctx.nodes.push(Node::default());
                        let child = ctx.nodes.len() - 1;
                        ctx.nodes[node].children.insert(l, child);
                        child
                    }
                };
            }
            if !ctx.nodes[node].terminal {
                ctx.nodes[node].terminal = true;
                ctx.phrases.push(phrase);
            }
        }
        Ok(ctx)
    }

    /// Same trie with different boosts.
    pub fn with_boost(&self, boost: f64, final_boost: f64) -> Result<Self> {
        Self::new(&self.phrases, boost, final_boost)
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    pub fn boost(&self) -> f64 {
        self.boost
    }

    pub fn final_boost(&self) -> f64 {
        self.final_boost
    }

    /// Number of trie nodes excluding the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], n: usize) -> usize {
            nodes[n].children.values().map(|&c| 1 + walk(nodes, c)).max().unwrap_or(0)
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_empty() && n.terminal).count()
    }

    pub fn start(&self) -> BiasState {
        BiasState { cursors: Vec::new(), at_boundary: true, banked: 0.0 }
    }

    /// Consumes one emitted grapheme; returns the change in bias score.
    pub fn advance(&self, state: &mut BiasState, label: usize) -> f64 {
        let mut delta = 0.0;
        let mut next = Vec::with_capacity(state.cursors.len() + 1);
        let mut step = |cursor: Cursor, delta: &mut f64, banked: &mut f64| match self.nodes[cursor.node].children.get(&label) {
            Some(&child) => {
                let mut pending = cursor.pending + self.boost;
                *delta += self.boost;
                if self.nodes[child].terminal {
                    *banked += pending + self.final_boost;
                    *delta += self.final_boost;
                    pending = 0.0;
                }
                next.push(Cursor { node: child, pending });
            }
            None => *delta -= cursor.pending,
        };
        let cursors = std::mem::take(&mut state.cursors);
        for cursor in cursors {
            step(cursor, &mut delta, &mut state.banked);
        }
        if state.at_boundary {
            step(Cursor { node: 0, pending: 0.0 }, &mut delta, &mut state.banked);
        }
        state.cursors = next;
        state.at_boundary = label == SPACE;
        delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cursor {
    node: usize,
    pending: f64,
}

/// Live trie cursors of one hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasState {
    cursors: Vec<Cursor>,
    at_boundary: bool,
    banked: f64,
}

impl BiasState {
    /// Credit from fully matched phrases.
    pub fn banked(&self) -> f64 {
        self.banked
    }

    /// Credit on partial matches that would be rolled back if they fail.
    pub fn pending(&self) -> f64 {
        self.cursors.iter().map(|c| c.pending).sum()
    }
}

/// Bias phrases from a file, one per line; blank lines are ignored.
pub fn load_bias_phrases(path: impl AsRef<Path>) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(text::normalize)
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn compile_bias<S: AsRef<str>>(phrases: &[S], boost: f64, final_boost: f64) -> Result<BiasContext> {
    BiasContext::new(phrases, boost, final_boost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(ctx: &BiasContext, s: &str) -> (f64, BiasState) {
        let mut st = ctx.start();
        let mut total = 0.0;
        for l in text::to_labels(s).unwrap() {
            total += ctx.advance(&mut st, l);
        }
        (total, st)
    }

    #[test]
    fn single_phrase_trie_shape() {
        let ctx = compile_bias(&["dan"], 1.0, 0.0).unwrap();
        assert_eq!((ctx.depth(), ctx.leaf_count(), ctx.node_count()), (3, 1, 3));
    }

    #[test]
    fn duplicates_collapse() {
        let a = compile_bias(&["dan", "dan"], 1.0, 0.5).unwrap();
        let b = compile_bias(&["dan"], 1.0, 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_phrases() {
        assert!(matches!(compile_bias(&["d4n"], 1.0, 0.0), Err(Error::OutOfVocabulary('4'))));
        assert!(compile_bias(&[""], 1.0, 0.0).is_err());
        assert!(compile_bias(&["dan"], -1.0, 0.0).is_err());
    }

    #[test]
    fn prefix_phrase_banks_and_stays_alive() {
        let ctx = compile_bias(&["zhu", "zhuge"], 1.0, 10.0).unwrap();
        let (total, st) = run(&ctx, "zhu");
        assert_eq!(total, 13.0);
        assert_eq!((st.banked(), st.pending()), (13.0, 0.0));
        let (total, st) = run(&ctx, "zhug");
        assert_eq!((total, st.pending()), (14.0, 1.0));
        let (total, st) = run(&ctx, "zhuge");
        assert_eq!((total, st.banked()), (25.0, 25.0));
        // falling off after "zhug" gives back only the "g" credit
        let (total, _) = run(&ctx, "zhugo");
        assert_eq!(total, 13.0);
    }

    #[test]
    fn partial_match_rolls_back() {
        let ctx = compile_bias(&["dan"], 2.0, 1.0).unwrap();
        assert_eq!(run(&ctx, "da").0, 4.0);
        assert_eq!(run(&ctx, "dab").0, 0.0);
    }

    #[test]
    fn matches_only_start_at_word_boundaries() {
        let ctx = compile_bias(&["dan"], 1.0, 0.0).unwrap();
        assert_eq!(run(&ctx, "odan").0, 0.0);
        assert_eq!(run(&ctx, "o dan").0, 3.0);
        assert_eq!(run(&ctx, "dan dan").0, 6.0);
    }

    #[test]
    fn loads_phrase_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bias.txt");
        fs::write(&path, "zhuge\n\ndan\nzhuge\n").unwrap();
        let phrases = load_bias_phrases(&path).unwrap();
        assert_eq!(phrases, vec!["zhuge", "dan", "zhuge"]);
        assert_eq!(compile_bias(&phrases, 1.0, 0.0).unwrap().phrases(), ["zhuge", "dan"]);
    }

    /// Credit counted from first principles: at each word-start position,
    /// boost per grapheme of the longest phrase completed there plus
    /// final_boost per phrase completed there.
    fn oracle(phrases: &[&str], boost: f64, final_boost: f64, s: &str) -> f64 {
        let chars: Vec<char> = s.chars().collect();
        let mut total = 0.0;
        for start in 0..chars.len() {
            if start > 0 && chars[start - 1] != ' ' {
                continue;
            }
            let rest: String = chars[start..].iter().collect();
            let mut uniq: Vec<&str> = phrases.to_vec();
            uniq.sort();
            uniq.dedup();
            let done: Vec<&&str> = uniq.iter().filter(|p| rest.starts_with(**p)).collect();
            if let Some(longest) = done.iter().map(|p| p.len()).max() {
                total += boost * longest as f64 + final_boost * done.len() as f64;
            }
        }
        total
    }

    proptest! {
        #[test]
        fn net_credit_counts_only_completed_phrases(
            s in "[abz ]{0,12}",
            boost in 0.0f64..3.0,
            final_boost in 0.0f64..3.0,
        ) {
            let phrases = ["ab", "abz", "za", "b a"];
            let ctx = compile_bias(&phrases, boost, final_boost).unwrap();
            let (_, st) = run(&ctx, &s);
            let want = oracle(&phrases, boost, final_boost, &s);
            prop_assert!((st.banked() - want).abs() < 1e-9, "{} vs {}", st.banked(), want);
        }
    }
}
