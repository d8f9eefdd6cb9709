//! Synthetic speech-like corpora: a multi-speaker base task, per-user name
//! corpora, and the supervision conditions built from them.
//!
//! Each grapheme has a fixed prototype vector. Rendering expands every
//! grapheme into 2–4 frames of its prototype, applies an affine distortion
//! (a speaker's voice, or the speaker-independent synthesizer map) and adds
//! Gaussian noise. Names always contain at least one letter that never
//! occurs in base-task text, so the base model cannot spell them.

mod conditions;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use conditions::{build_condition, correct_names, Manifest, ManifestEntry, SupervisionTag};

use crate::error::{Error, Result};
use crate::grad::Tensor;
use crate::text::{self, GRAPHEMES};

/// Letters that only ever appear inside user names.
pub const RESERVED_LETTERS: [char; 6] = ['j', 'k', 'q', 'v', 'x', 'z'];

const VOWELS: [char; 6] = ['a', 'e', 'i', 'o', 'u', 'y'];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub input_dim: usize,
    pub base_words: usize,
    pub base_train_sentences: usize,
    pub base_test_sentences: usize,
    pub base_speakers: usize,
    pub names_per_user: usize,
    pub train_per_name: usize,
    pub test_per_name: usize,
    pub noise_sigma: f64,
    /// Standard deviation of per-speaker gain around 1.
    pub speaker_gain_spread: f64,
    /// Standard deviation of per-speaker offsets.
    pub speaker_bias_spread: f64,
    /// Scales the synthesizer's departure from the identity map.
    pub tts_mismatch: f64,
    pub min_frames_per_grapheme: usize,
    pub max_frames_per_grapheme: usize,
    /// Silence frames before and after every rendering.
    pub edge_silence_frames: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            base_words: 200,
            base_train_sentences: 500,
            base_test_sentences: 100,
            base_speakers: 4,
            names_per_user: 5,
            train_per_name: 10,
            test_per_name: 4,
            noise_sigma: 0.1,
            speaker_gain_spread: 0.15,
            speaker_bias_spread: 0.3,
            tts_mismatch: 1.0,
            min_frames_per_grapheme: 2,
            max_frames_per_grapheme: 4,
            edge_silence_frames: 6,
        }
    }
}

/// Per-dimension gain and offset applied to clean prototype frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Distortion {
    pub fn identity(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], bias: vec![0.0; dim] }
    }

    fn sample(rng: &mut impl Rng, dim: usize, gain_spread: f64, bias_spread: f64) -> Self {
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        Self {
            gain: (0..dim).map(|_| 1.0 + gain_spread * n.sample(rng)).collect(),
            bias: (0..dim).map(|_| bias_spread * n.sample(rng)).collect(),
        }
    }

    /// `self + w·(other − self)`, componentwise.
    pub fn blend(&self, other: &Distortion, w: f64) -> Self {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect();
        Self { gain: mix(&self.gain, &other.gain), bias: mix(&self.bias, &other.bias) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speaker {
    pub id: String,
    pub voice: Distortion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// The speaker-independent synthesizer.
    CleanTts,
    /// The speaker's own voice.
    UserVoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub transcript: String,
    pub speaker: String,
}

/// One simulated user: a new voice, five names, and train/test sentences
/// that each mention one name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub speaker: Speaker,
    pub names: Vec<String>,
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// The fixed synthetic universe shared by base training and every user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub config: WorldConfig,
    pub seed: u64,
    prototypes: Vec<Vec<f64>>,
    pub vocabulary: Vec<String>,
    pub speakers: Vec<Speaker>,
    pub base_train: Vec<Utterance>,
    pub base_test: Vec<Utterance>,
    pub tts: Distortion,
}

/// Stable 64-bit FNV-1a over a sequence of byte strings.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in part.iter().chain([0xffu8].iter()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(&[&seed.to_le_bytes(), label.as_bytes()]))
}

fn tts_map(seed: u64, config: &WorldConfig) -> Distortion {
    let mut rng = rng_for(seed, "tts");
    let generic = Distortion::sample(&mut rng, config.input_dim, config.speaker_gain_spread, config.speaker_bias_spread);
    Distortion::identity(config.input_dim).blend(&generic, config.tts_mismatch)
}

fn base_letters() -> Vec<char> {
    GRAPHEMES.iter().copied().filter(|c| c.is_ascii_lowercase() && !RESERVED_LETTERS.contains(c)).collect()
}

fn pseudo_word(rng: &mut impl Rng, consonants: &[char], len: usize) -> String {
    let start_vowel = rng.gen_bool(0.3);
    (0..len)
        .map(|i| {
            if (i % 2 == 0) != start_vowel {
                *consonants.choose(rng).expect("consonants")
            } else {
                *VOWELS.choose(rng).expect("vowels")
            }
        })
        .collect()
}

impl SynthWorld {
    pub fn new(config: WorldConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.base_words == 0 || config.base_speakers == 0 {
            return Err(Error::InvalidArgument("world needs features, words and speakers".into()));
        }
        if config.min_frames_per_grapheme == 0 || config.min_frames_per_grapheme > config.max_frames_per_grapheme {
            return Err(Error::InvalidArgument("invalid frames-per-grapheme range".into()));
        }
        let dim = config.input_dim;
        let mut rng = rng_for(seed, "prototypes");
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let prototypes = (0..GRAPHEMES.len()).map(|_| (0..dim).map(|_| n.sample(&mut rng)).collect()).collect();

        let mut rng = rng_for(seed, "vocabulary");
        let consonants: Vec<char> = base_letters().into_iter().filter(|c| !VOWELS.contains(c)).collect();
        let mut vocabulary = Vec::with_capacity(config.base_words);
        while vocabulary.len() < config.base_words {
            let len = rng.gen_range(2..=6);
            let w = pseudo_word(&mut rng, &consonants, len);
            if !vocabulary.contains(&w) {
                vocabulary.push(w);
            }
        }

        let mut rng = rng_for(seed, "speakers");
        let speakers = (0..config.base_speakers)
            .map(|i| Speaker {
                id: format!("base{i}"),
                voice: Distortion::sample(&mut rng, dim, config.speaker_gain_spread, config.speaker_bias_spread),
            })
            .collect::<Vec<_>>();
        let tts = tts_map(seed, &config);

        let mut world = Self {
            config,
            seed,
            prototypes,
            vocabulary,
            speakers,
            base_train: Vec::new(),
            base_test: Vec::new(),
            tts,
        };
        let mut rng = rng_for(seed, "base-corpus");
        let mut seen = std::collections::BTreeSet::new();
        let total = world.config.base_train_sentences + world.config.base_test_sentences;
        let mut sentences = Vec::with_capacity(total);
        while sentences.len() < total {
            let s = world.base_sentence(&mut rng, 2..=4);
            if seen.insert(s.clone()) {
                sentences.push(s);
            }
        }
        let n_speakers = world.speakers.len();
        for (i, s) in sentences.into_iter().enumerate() {
            let speaker = world.speakers[i % n_speakers].id.clone();
            if i < world.config.base_train_sentences {
                world.base_train.push(Utterance { id: format!("base-train-{i:04}"), transcript: s, speaker });
            } else {
                let k = i - world.config.base_train_sentences;
                world.base_test.push(Utterance { id: format!("base-test-{k:04}"), transcript: s, speaker });
            }
        }
        Ok(world)
    }

    fn base_sentence(&self, rng: &mut impl Rng, words: std::ops::RangeInclusive<usize>) -> String {
        let n = rng.gen_range(words);
        (0..n).map(|_| self.vocabulary.choose(rng).expect("vocabulary").as_str()).collect::<Vec<_>>().join(" ")
    }

    /// The same world with the synthesizer moved `mismatch` of the way from
    /// the identity map toward its generic distortion.
    pub fn with_tts_mismatch(&self, mismatch: f64) -> Self {
        let mut world = self.clone();
        world.config.tts_mismatch = mismatch;
        world.tts = tts_map(self.seed, &world.config);
        world
    }

    pub fn speaker(&self, id: &str) -> Option<&Speaker> {
        self.speakers.iter().find(|s| s.id == id)
    }

    /// Generates user number `index`: a fresh voice, names spelled with at
    /// least one reserved letter, and sentences embedding one name each.
    pub fn user(&self, index: usize) -> UserProfile {
        let cfg = &self.config;
        let mut rng = rng_for(self.seed, &format!("user{index}"));
        let speaker = Speaker {
            id: format!("user{index}"),
            voice: Distortion::sample(&mut rng, cfg.input_dim, cfg.speaker_gain_spread, cfg.speaker_bias_spread),
        };
        let consonants: Vec<char> = base_letters().into_iter().filter(|c| !VOWELS.contains(c)).collect();
        let mut names: Vec<String> = Vec::with_capacity(cfg.names_per_user);
        while names.len() < cfg.names_per_user {
            let len = rng.gen_range(4..=6);
            let mut chars: Vec<char> = pseudo_word(&mut rng, &consonants, len).chars().collect();
            // swap one consonant slot for a reserved letter
            let slots: Vec<usize> = (0..len).filter(|&i| !VOWELS.contains(&chars[i])).collect();
            let slot = *slots.choose(&mut rng).unwrap_or(&0);
            chars[slot] = *RESERVED_LETTERS.choose(&mut rng).expect("reserved letters");
            let name: String = chars.into_iter().collect();
            if !names.contains(&name) {
                names.push(name);
            }
        }
        let sentence = |name: &str, rng: &mut ChaCha8Rng| {
            let mut words: Vec<String> =
                self.base_sentence(rng, 1..=3).split(' ').map(str::to_string).collect();
            let at = rng.gen_range(0..=words.len());
            words.insert(at, name.to_string());
            words.join(" ")
        };
        let make = |split: &str, per_name: usize, rng: &mut ChaCha8Rng| {
            let mut out = Vec::with_capacity(per_name * names.len());
            for _ in 0..per_name {
                for name in &names {
                    let id = format!("user{index}-{split}-{:03}", out.len());
                    out.push(Utterance { id, transcript: sentence(name, rng), speaker: speaker.id.clone() });
                }
            }
            out
        };
        let train = make("train", cfg.train_per_name, &mut rng);
        let test = make("test", cfg.test_per_name, &mut rng);
        UserProfile { speaker, names, train, test }
    }

    /// Renders `transcript` into a `[frames × input_dim]` feature matrix,
    /// framed by silence.
    /// Durations and noise are drawn from a generator seeded by
    /// `(world seed, speaker, mode, transcript, salt)`.
    pub fn synth_features(&self, transcript: &str, speaker: &Speaker, mode: RenderMode, salt: &str) -> Result<Tensor> {
        let labels = text::to_labels(transcript)?;
        if labels.is_empty() {
            return Err(Error::Empty("transcript"));
        }
        let cfg = &self.config;
        let mode_tag: &[u8] = match mode {
            RenderMode::CleanTts => b"tts",
            RenderMode::UserVoice => b"voice",
        };
        let voice = match mode {
            RenderMode::CleanTts => &self.tts,
            RenderMode::UserVoice => &speaker.voice,
        };
        let id: &[u8] = match mode {
            RenderMode::CleanTts => b"",
            RenderMode::UserVoice => speaker.id.as_bytes(),
        };
        let seed = stable_hash(&[&self.seed.to_le_bytes(), id, mode_tag, transcript.as_bytes(), salt.as_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut values = Vec::new();
        let mut push = |proto: Option<&[f64]>, rng: &mut ChaCha8Rng| {
            for d in 0..cfg.input_dim {
                let p = proto.map_or(0.0, |p| p[d]);
                values.push(voice.gain[d] * p + voice.bias[d] + noise.sample(rng));
            }
        };
        for _ in 0..cfg.edge_silence_frames {
            push(None, &mut rng);
        }
        for &l in &labels {
            let frames = rng.gen_range(cfg.min_frames_per_grapheme..=cfg.max_frames_per_grapheme);
            for _ in 0..frames {
                push(Some(&self.prototypes[l]), &mut rng);
            }
        }
        for _ in 0..cfg.edge_silence_frames {
            push(None, &mut rng);
        }
        let frames = values.len() / cfg.input_dim;
        Tensor::new(vec![frames, cfg.input_dim], values)
    }

    /// Renders a stored utterance in its speaker's voice.
    pub fn render(&self, utt: &Utterance, profile: Option<&UserProfile>) -> Result<Tensor> {
        let speaker = match profile {
            Some(p) if p.speaker.id == utt.speaker => &p.speaker,
            _ => self
                .speaker(&utt.speaker)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown speaker {:?}", utt.speaker)))?,
        };
        self.synth_features(&utt.transcript, speaker, RenderMode::UserVoice, &utt.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SynthWorld {
        SynthWorld::new(WorldConfig::default(), 7).unwrap()
    }

    #[test]
    fn rendering_is_deterministic_with_bounded_duration() {
        let w = world();
        let s = &w.speakers[0];
        let a = w.synth_features("tu ba", s, RenderMode::UserVoice, "x").unwrap();
        let b = w.synth_features("tu ba", s, RenderMode::UserVoice, "x").unwrap();
        assert_eq!(a, b);
        assert!((10 + 12..=20 + 12).contains(&a.rows()));
        let c = w.synth_features("tu ba", s, RenderMode::CleanTts, "x").unwrap();
        assert_ne!(a, c);
        assert!(w.synth_features("tu9", s, RenderMode::CleanTts, "x").is_err());
    }

    #[test]
    fn base_text_avoids_reserved_letters() {
        let w = world();
        assert_eq!(w.vocabulary.len(), 200);
        assert_eq!((w.base_train.len(), w.base_test.len()), (500, 100));
        for u in w.base_train.iter().chain(&w.base_test) {
            assert!(!u.transcript.chars().any(|c| RESERVED_LETTERS.contains(&c)), "{}", u.transcript);
        }
    }

    #[test]
    fn users_have_names_in_both_splits() {
        let w = world();
        let u = w.user(0);
        assert_eq!(u.names.len(), 5);
        assert_eq!((u.train.len(), u.test.len()), (50, 20));
        for name in &u.names {
            assert!(name.chars().any(|c| RESERVED_LETTERS.contains(&c)));
            let count = |split: &[Utterance]| split.iter().filter(|x| text::words(&x.transcript).contains(name)).count();
            assert!(count(&u.train) >= 10 && count(&u.test) >= 4);
        }
        let train: std::collections::BTreeSet<_> = u.train.iter().map(|x| &x.id).collect();
        assert!(u.test.iter().all(|x| !train.contains(&x.id)));
        assert_eq!(u, w.user(0));
        assert_ne!(u.names, w.user(1).names);
    }

    #[test]
    fn stable_hash_separates_parts() {
        assert_ne!(stable_hash(&[b"ab", b"c"]), stable_hash(&[b"a", b"bc"]));
        assert_eq!(stable_hash(&[b"x"]), stable_hash(&[b"x"]));
    }
}
