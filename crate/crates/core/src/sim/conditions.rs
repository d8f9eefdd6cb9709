use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{RenderMode, SynthWorld, UserProfile};
use crate::decode::{beam_decode, greedy_transcript, BiasContext};
use crate::error::{Error, Result};
use crate::metrics::{align, EditOp};
use crate::model::TransducerModel;
use crate::trainer::TrainingCache;
use crate::text;

/// Where a training transcript (and its audio) comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionTag {
    /// User speech, baseline greedy hypothesis.
    Unsupervised,
    /// User speech, biased beam hypothesis.
    Biased,
    /// Synthesized names in isolation.
    TtsNames,
    /// Synthesized training sentences with their references.
    TtsSentences,
    /// User speech, baseline hypothesis with name errors corrected.
    SemiSupervised,
    /// User speech, reference transcript.
    Supervised,
}

impl SupervisionTag {
    pub const ALL: [SupervisionTag; 6] = [
        SupervisionTag::Unsupervised,
        SupervisionTag::Biased,
        SupervisionTag::TtsNames,
        SupervisionTag::TtsSentences,
        SupervisionTag::SemiSupervised,
        SupervisionTag::Supervised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SupervisionTag::Unsupervised => "unsupervised",
            SupervisionTag::Biased => "biased",
            SupervisionTag::TtsNames => "tts_names",
            SupervisionTag::TtsSentences => "tts_sentences",
            SupervisionTag::SemiSupervised => "semi_supervised",
            SupervisionTag::Supervised => "supervised",
        }
    }

    pub fn uses_baseline(self) -> bool {
        matches!(self, SupervisionTag::Unsupervised | SupervisionTag::Biased | SupervisionTag::SemiSupervised)
    }
}

impl fmt::Display for SupervisionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SupervisionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown supervision condition {s:?}")))
    }
}

/// Repairs only the name errors of `hyp`: a name substituted in the
/// hypothesis is restored in place, a deleted name is reinserted right
/// after the output aligned to the preceding reference word. Everything
/// else, including names the hypothesis inserted, is kept verbatim.
pub fn correct_names<S: AsRef<str>>(reference: &[S], hyp: &[S], names: &BTreeSet<String>) -> Vec<String> {
    let alignment = align(reference, hyp);
    let mut out = Vec::with_capacity(hyp.len() + names.len());
    // pairs are visited in alignment order, so a deletion is emitted
    // exactly after whatever the previous reference word aligned to
    for pair in &alignment.pairs {
        let ref_is_name = pair.reference.as_ref().is_some_and(|w| names.contains(w));
        match (pair.op, ref_is_name) {
            (EditOp::Substitution, true) => out.push(pair.reference.clone().expect("substitution has a reference")),
            (EditOp::Deletion, true) => out.push(pair.reference.clone().expect("deletion has a reference")),
            (EditOp::Deletion, false) => {}
            _ => out.push(pair.hypothesis.clone().expect("match, substitution and insertion have a hypothesis")),
        }
    }
    out
}

/// Builds the training cache for one supervision condition of `profile`.
///
/// Conditions that start from recognizer output need `baseline`; the
/// biased condition also needs `bias`.
pub fn build_condition(
    tag: SupervisionTag,
    world: &SynthWorld,
    profile: &UserProfile,
    baseline: Option<&TransducerModel>,
    bias: Option<&BiasContext>,
    beam_width: usize,
) -> Result<TrainingCache> {
    let needs = |what: &str| Error::InvalidArgument(format!("condition {tag} needs {what}"));
    let copies = world.config.train_per_name;
    let capacity = match tag {
        SupervisionTag::TtsNames => profile.names.len() * copies,
        _ => profile.train.len(),
    }
    .max(1);
    let mut cache = TrainingCache::new(capacity)?;
    let source = tag.name();
    match tag {
        SupervisionTag::TtsNames => {
            for k in 0..copies {
                for name in &profile.names {
                    let id = format!("{}-tts-{name}-{k}", profile.speaker.id);
                    let feats = world.synth_features(name, &profile.speaker, RenderMode::CleanTts, &id)?;
                    cache.append(id, feats, name, source)?;
                }
            }
        }
        SupervisionTag::TtsSentences => {
            for utt in &profile.train {
                let feats = world.synth_features(&utt.transcript, &profile.speaker, RenderMode::CleanTts, &utt.id)?;
                cache.append(utt.id.clone(), feats, &utt.transcript, source)?;
            }
        }
        _ => {
            let names: BTreeSet<String> = profile.names.iter().cloned().collect();
            for utt in &profile.train {
                let feats = world.render(utt, Some(profile))?;
                let transcript = match tag {
                    SupervisionTag::Supervised => utt.transcript.clone(),
                    SupervisionTag::Unsupervised => greedy_transcript(baseline.ok_or_else(|| needs("a baseline model"))?, &feats)?,
                    SupervisionTag::Biased => {
                        let model = baseline.ok_or_else(|| needs("a baseline model"))?;
                        let ctx = bias.ok_or_else(|| needs("a bias context"))?;
                        beam_decode(model, &feats, beam_width, Some(ctx))?.remove(0).text
                    }
                    SupervisionTag::SemiSupervised => {
                        let hyp = greedy_transcript(baseline.ok_or_else(|| needs("a baseline model"))?, &feats)?;
                        correct_names(&text::words(&utt.transcript), &text::words(&hyp), &names).join(" ")
                    }
                    SupervisionTag::TtsNames | SupervisionTag::TtsSentences => unreachable!("handled above"),
                };
                cache.append(utt.id.clone(), feats, &transcript, source)?;
            }
        }
    }
    Ok(cache)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub transcript: String,
    pub speaker: String,
    pub split: String,
    pub condition: Option<String>,
}

/// Index of the utterances behind an experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn push(&mut self, id: &str, transcript: &str, speaker: &str, split: &str, condition: Option<SupervisionTag>) {
        self.entries.push(ManifestEntry {
            id: id.into(),
            transcript: transcript.into(),
            speaker: speaker.into(),
            split: split.into(),
            condition: condition.map(|c| c.name().to_string()),
        });
    }

    /// Base-task train/test utterances.
    pub fn for_world(world: &SynthWorld) -> Self {
        let mut m = Self::default();
        for (split, utts) in [("base_train", &world.base_train), ("base_test", &world.base_test)] {
            for u in utts.iter() {
                m.push(&u.id, &u.transcript, &u.speaker, split, None);
            }
        }
        m
    }

    /// A user's test split plus one training cache's contents.
    pub fn for_condition(profile: &UserProfile, tag: SupervisionTag, cache: &TrainingCache) -> Self {
        let mut m = Self::default();
        for e in cache.snapshot().entries() {
            m.push(&e.id, &e.transcript, &profile.speaker.id, "user_train", Some(tag));
        }
        for u in &profile.test {
            m.push(&u.id, &u.transcript, &u.speaker, "user_test", None);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        text::words(s)
    }

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn worked_example_correction() {
        let out = correct_names(&w("zhuge dan was from yangdu"), &w("zhuge was from young zhuge"), &set(&["zhuge", "dan", "yangdu"]));
        assert_eq!(out.join(" "), "zhuge dan was from yangdu zhuge");
    }

    #[test]
    fn correct_hypothesis_is_unchanged() {
        let r = w("a dan b");
        assert_eq!(correct_names(&r, &r, &set(&["dan"])), r);
    }

    #[test]
    fn deleted_name_is_reinserted() {
        assert_eq!(correct_names(&w("a dan b"), &w("a b"), &set(&["dan"])).join(" "), "a dan b");
        assert_eq!(correct_names(&w("dan b"), &w("b"), &set(&["dan"])).join(" "), "dan b");
    }

    #[test]
    fn tags_parse_and_print() {
        for t in SupervisionTag::ALL {
            assert_eq!(t.name().parse::<SupervisionTag>().unwrap(), t);
        }
        assert!("baseline".parse::<SupervisionTag>().is_err());
    }

    fn seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "dan", "zhu"]).prop_map(String::from), 0..=6)
    }

    proptest! {
        #[test]
        fn correction_is_idempotent_and_preserves_other_words(r in seq(), h in seq()) {
            let names = set(&["dan", "zhu"]);
            let once = correct_names(&r, &h, &names);
            prop_assert_eq!(correct_names(&r, &once, &names), once.clone());
            let alignment = align(&r, &h);
            let name_deletions = alignment
                .pairs
                .iter()
                .filter(|p| p.op == EditOp::Deletion && names.contains(p.reference.as_ref().unwrap()))
                .count();
            prop_assert_eq!(once.len(), h.len() + name_deletions);
            // hypothesis words outside name substitutions survive in order
            let kept: Vec<&String> = alignment
                .pairs
                .iter()
                .filter(|p| p.hypothesis.is_some() && !(p.op == EditOp::Substitution && names.contains(p.reference.as_ref().unwrap())))
                .map(|p| p.hypothesis.as_ref().unwrap())
                .collect();
            let mut it = once.iter();
            for k in kept {
                prop_assert!(it.any(|o| o == k));
            }
        }
    }
}
