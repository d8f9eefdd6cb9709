//! Word error rate and keyword-restricted precision/recall from a minimal
//! edit-distance alignment.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Match,
    Substitution,
    Insertion,
    Deletion,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub reference: Option<String>,
    pub hypothesis: Option<String>,
    pub op: EditOp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
}

impl Alignment {
    pub fn count(&self, op: EditOp) -> usize {
        self.pairs.iter().filter(|p| p.op == op).count()
    }

    /// Substitutions + insertions + deletions.
    pub fn cost(&self) -> usize {
        self.pairs.len() - self.count(EditOp::Match)
    }

    pub fn reference_len(&self) -> usize {
        self.pairs.iter().filter(|p| p.reference.is_some()).count()
    }

    pub fn reference_words(&self) -> Vec<&str> {
        self.pairs.iter().filter_map(|p| p.reference.as_deref()).collect()
    }

    pub fn hypothesis_words(&self) -> Vec<&str> {
        self.pairs.iter().filter_map(|p| p.hypothesis.as_deref()).collect()
    }
}

/// Minimal unit-cost alignment of two word sequences.
///
/// The cost table is built over suffixes and read back from the start of
/// both sequences, so among equal-cost paths the leftmost decision prefers
/// match, then substitution, then deletion, then insertion.
pub fn align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let r = |i: usize| reference[i].as_ref();
    let h = |j: usize| hypothesis[j].as_ref();
    // cost[i][j]: distance between reference[i..] and hypothesis[j..]
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            cost[i][j] = if i == n {
                m - j
            } else if j == m {
                n - i
            } else {
                let diag = cost[i + 1][j + 1] + usize::from(r(i) != h(j));
                diag.min(cost[i + 1][j] + 1).min(cost[i][j + 1] + 1)
            };
        }
    }
    let mut pairs = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = cost[i][j];
        let pair = if i < n && j < m && r(i) == h(j) && here == cost[i + 1][j + 1] {
            (Some(i), Some(j), EditOp::Match)
        } else if i < n && j < m && here == cost[i + 1][j + 1] + 1 {
            (Some(i), Some(j), EditOp::Substitution)
        } else if i < n && here == cost[i + 1][j] + 1 {
            (Some(i), None, EditOp::Deletion)
        } else {
            (None, Some(j), EditOp::Insertion)
        };
        i += usize::from(pair.0.is_some());
        j += usize::from(pair.1.is_some());
        pairs.push(AlignedPair {
            reference: pair.0.map(|k| r(k).to_string()),
            hypothesis: pair.1.map(|k| h(k).to_string()),
            op: pair.2,
        });
    }
    Alignment { pairs }
}

/// Corpus WER over already computed alignments.
pub fn wer_of(alignments: &[Alignment]) -> Result<f64> {
    let words: usize = alignments.iter().map(Alignment::reference_len).sum();
    if words == 0 {
        return Err(Error::Empty("reference words"));
    }
    let errors: usize = alignments.iter().map(Alignment::cost).sum();
    Ok(errors as f64 / words as f64)
}

/// Corpus WER: total edit operations over total reference words.
pub fn wer<S: AsRef<str>>(refs: &[Vec<S>], hyps: &[Vec<S>]) -> Result<f64> {
    wer_of(&align_corpus(refs, hyps)?)
}

pub fn align_corpus<S: AsRef<str>>(refs: &[Vec<S>], hyps: &[Vec<S>]) -> Result<Vec<Alignment>> {
    if refs.len() != hyps.len() {
        return Err(Error::InvalidArgument(format!("{} references but {} hypotheses", refs.len(), hyps.len())));
    }
    Ok(refs.iter().zip(hyps).map(|(r, h)| align(r, h)).collect())
}

/// Keyword counts and the derived ratios. A ratio with a zero denominator
/// is reported as 1.0 and flagged vacuous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub n_ref: usize,
    pub n_hyp: usize,
    pub n_correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_vacuous: bool,
    pub recall_vacuous: bool,
}

impl KeywordReport {
    pub fn from_counts(n_ref: usize, n_hyp: usize, n_correct: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Self {
            n_ref,
            n_hyp,
            n_correct,
            precision: ratio(n_correct, n_hyp),
            recall: ratio(n_correct, n_ref),
            precision_vacuous: n_hyp == 0,
            recall_vacuous: n_ref == 0,
        }
    }
}

/// Micro-averaged precision/recall over the words selected by `is_keyword`.
pub fn keyword_pr_by(alignments: &[Alignment], is_keyword: impl Fn(&str) -> bool) -> KeywordReport {
    let (mut n_ref, mut n_hyp, mut n_correct) = (0, 0, 0);
    for pair in alignments.iter().flat_map(|a| &a.pairs) {
        let r = pair.reference.as_deref().is_some_and(&is_keyword);
        let h = pair.hypothesis.as_deref().is_some_and(&is_keyword);
        n_ref += usize::from(r);
        n_hyp += usize::from(h);
        n_correct += usize::from(r && pair.op == EditOp::Match);
    }
    KeywordReport::from_counts(n_ref, n_hyp, n_correct)
}

pub fn keyword_pr(alignments: &[Alignment], keywords: &BTreeSet<String>) -> KeywordReport {
    keyword_pr_by(alignments, |w| keywords.contains(w))
}

/// Names vs everything else, plus WER: the columns of a supervision table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub utterances: usize,
    pub reference_words: usize,
    pub wer: f64,
    pub keywords: KeywordReport,
    pub non_keywords: KeywordReport,
}

pub fn evaluate<S: AsRef<str>>(refs: &[Vec<S>], hyps: &[Vec<S>], keywords: &BTreeSet<String>) -> Result<EvaluationReport> {
    let alignments = align_corpus(refs, hyps)?;
    Ok(EvaluationReport {
        utterances: alignments.len(),
        reference_words: alignments.iter().map(Alignment::reference_len).sum(),
        wer: wer_of(&alignments)?,
        keywords: keyword_pr(&alignments, keywords),
        non_keywords: keyword_pr_by(&alignments, |w| !keywords.contains(w)),
    })
}

/// Normalized, whitespace-tokenized lines of a UTF-8 corpus file.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    Ok(fs::read_to_string(path)?.lines().map(text::words).collect())
}

/// One keyword per line; blank lines are ignored.
pub fn read_keywords(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    Ok(fs::read_to_string(path)?.lines().map(text::normalize).filter(|w| !w.is_empty()).collect())
}

/// Scores parallel reference/hypothesis files against a keyword list.
pub fn evaluate_files(
    refs: impl AsRef<Path>,
    hyps: impl AsRef<Path>,
    keywords: impl AsRef<Path>,
) -> Result<EvaluationReport> {
    evaluate(&read_corpus(refs)?, &read_corpus(hyps)?, &read_keywords(keywords)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        text::words(s)
    }

    fn levenshtein(a: &[String], b: &[String]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = levenshtein(ra, rb) + usize::from(x != y);
                sub.min(levenshtein(ra, b) + 1).min(levenshtein(a, rb) + 1)
            }
        }
    }

    #[test]
    fn identical_sequences_align_with_matches() {
        let a = align(&w("a b c"), &w("a b c"));
        assert_eq!(a.cost(), 0);
        assert!(a.pairs.iter().all(|p| p.op == EditOp::Match));
    }

    #[test]
    fn worked_example_alignment() {
        let a = align(&w("zhuge dan was from yangdu"), &w("zhuge was from young zhuge"));
        let ops: Vec<EditOp> = a.pairs.iter().map(|p| p.op).collect();
        use EditOp::*;
        assert_eq!(ops, vec![Match, Deletion, Match, Match, Substitution, Insertion]);
        assert_eq!(a.pairs[4].hypothesis.as_deref(), Some("young"));
        assert_eq!(a.cost(), 3);
        assert_eq!(wer_of(&[a]).unwrap(), 0.6);
    }

    #[test]
    fn worked_example_keyword_counts() {
        let a = align(&w("zhuge dan was from yangdu"), &w("zhuge was from young zhuge"));
        let names: BTreeSet<String> = ["zhuge", "dan", "yangdu"].map(String::from).into();
        let r = keyword_pr(&[a], &names);
        assert_eq!((r.n_ref, r.n_hyp, r.n_correct), (3, 2, 1));
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0 / 3.0);
    }

    #[test]
    fn wer_edge_cases() {
        assert_eq!(wer(&[w("a b c d")], &[w("")]).unwrap(), 1.0);
        assert_eq!(wer(&[w("a b"), w("c")], &[w("a b"), w("c")]).unwrap(), 0.0);
        assert!(matches!(wer(&[w("")], &[w("a")]), Err(Error::Empty(_))));
        assert!(wer(&[w("a")], &[]).is_err());
    }

    #[test]
    fn absent_keywords_are_vacuous() {
        let a = align(&w("a b"), &w("a c"));
        let r = keyword_pr(&[a], &BTreeSet::from(["z".to_string()]));
        assert_eq!((r.n_ref, r.n_hyp, r.n_correct), (0, 0, 0));
        assert!(r.precision_vacuous && r.recall_vacuous);
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
    }

    #[test]
    fn perfect_hypothesis_has_full_keyword_scores() {
        let s = w("dan met dan at yangdu");
        let names: BTreeSet<String> = ["dan", "yangdu"].map(String::from).into();
        let r = keyword_pr(&[align(&s, &s)], &names);
        assert_eq!((r.n_correct, r.precision, r.recall), (3, 1.0, 1.0));
    }

    #[test]
    fn exhaustive_small_alignments_are_minimal() {
        let vocab = ["a", "b", "c"];
        let seqs: Vec<Vec<String>> = (0..=4usize)
            .flat_map(|len| {
                (0..3usize.pow(len as u32)).map(move |code| {
                    (0..len).map(|k| vocab[(code / 3usize.pow(k as u32)) % 3].to_string()).collect()
                })
            })
            .collect();
        for r in &seqs {
            for h in &seqs {
                let a = align(r, h);
                assert_eq!(a.cost(), levenshtein(r, h));
                assert_eq!(a.reference_words(), r.iter().map(String::as_str).collect::<Vec<_>>());
                assert_eq!(a.hypothesis_words(), h.iter().map(String::as_str).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn evaluates_corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = |n: &str| dir.path().join(n);
        fs::write(p("ref.txt"), "Zhuge Dan was from Yangdu.\n").unwrap();
        fs::write(p("hyp.txt"), "zhuge was from young zhuge\n").unwrap();
        fs::write(p("kw.txt"), "zhuge\ndan\n\nyangdu\n").unwrap();
        let r = evaluate_files(p("ref.txt"), p("hyp.txt"), p("kw.txt")).unwrap();
        assert_eq!(r.wer, 0.6);
        assert_eq!((r.keywords.n_ref, r.keywords.n_hyp, r.keywords.n_correct), (3, 2, 1));
        assert_eq!((r.non_keywords.n_ref, r.non_keywords.n_correct), (2, 2));
    }

    fn word_seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(String::from), 0..=6)
    }

    proptest! {
        #[test]
        fn alignment_cost_matches_recursive_oracle(r in word_seq(), h in word_seq()) {
            let a = align(&r, &h);
            prop_assert_eq!(a.cost(), levenshtein(&r, &h));
            prop_assert_eq!(a.clone(), align(&r, &h));
        }

        #[test]
        fn keyword_ratios_are_bounded(r in word_seq(), h in word_seq(), k in prop::collection::btree_set(prop::sample::select(vec!["a", "b", "x"]).prop_map(String::from), 0..3)) {
            let rep = keyword_pr(&[align(&r, &h)], &k);
            prop_assert!(rep.n_correct <= rep.n_ref.min(rep.n_hyp));
            prop_assert!((0.0..=1.0).contains(&rep.precision) && (0.0..=1.0).contains(&rep.recall));
        }

        #[test]
        fn full_vocabulary_recall_counts_matches(r in word_seq(), h in word_seq()) {
            prop_assume!(!r.is_empty());
            let a = align(&r, &h);
            let rep = keyword_pr_by(std::slice::from_ref(&a), |_| true);
            prop_assert_eq!(rep.recall, a.count(EditOp::Match) as f64 / r.len() as f64);
        }
    }
}
