use super::*;
use crate::model::ModelConfig;

/// Hand-set distributions indexed by frame and the last emitted label.
struct TableScorer {
    /// `[frame][context]` where context 0 is the empty history and
    /// context `k + 1` means label `k` was emitted last.
    table: Vec<Vec<Vec<f64>>>,
}

impl TableScorer {
    fn new(probs: Vec<Vec<Vec<f64>>>) -> Self {
        let table = probs.into_iter().map(|f| f.into_iter().map(|p| p.into_iter().map(f64::ln).collect()).collect()).collect();
        Self { table }
    }

    fn context(labels: &[usize]) -> usize {
        labels.last().map_or(0, |l| l + 1)
    }

    /// Exact marginal probability of emitting `y`, summed over alignments.
    fn marginal(&self, y: &[usize]) -> f64 {
        fn go(s: &TableScorer, y: &[usize], t: usize, u: usize) -> f64 {
            if t == s.table.len() {
                return if u == y.len() { 1.0 } else { 0.0 };
            }
            let p = &s.table[t][TableScorer::context(&y[..u])];
            let mut total = p[s.blank()].exp() * go(s, y, t + 1, u);
            if u < y.len() {
                total += p[y[u]].exp() * go(s, y, t, u + 1);
            }
            total
        }
        go(self, y, 0, 0)
    }
}

impl Scorer for TableScorer {
    type State = Vec<usize>;

    fn frames(&self) -> usize {
        self.table.len()
    }

    fn blank(&self) -> usize {
        self.table[0][0].len() - 1
    }

    fn start(&self) -> Vec<usize> {
        Vec::new()
    }

    fn advance(&self, state: &Vec<usize>, label: usize) -> Vec<usize> {
        let mut s = state.clone();
        s.push(label);
        s
    }

    fn log_probs(&self, frame: usize, state: &Vec<usize>) -> Vec<f64> {
        self.table[frame][Self::context(state)].clone()
    }
}

fn random_model_input(seed: u64) -> (TransducerModel, Tensor) {
    let model = TransducerModel::new(ModelConfig::default(), seed).unwrap();
    let frames = 30;
    let values = (0..frames * 8).map(|i| (((i as u64 * 2654435761 + seed * 97) % 1000) as f64) / 250.0 - 2.0).collect();
    (model, Tensor::new(vec![frames, 8], values).unwrap())
}

#[test]
fn always_blank_model_emits_nothing() {
    let s = TableScorer::new(vec![vec![vec![0.1, 0.1, 0.8]; 3]; 4]);
    assert!(greedy_search(&s).is_empty());
    let top = &beam_search(&s, 3, None).unwrap()[0];
    assert!(top.labels.is_empty());
}

#[test]
fn greedy_caps_emissions_per_frame() {
    let s = TableScorer::new(vec![vec![vec![0.9, 0.05, 0.05]; 3]; 2]);
    assert_eq!(greedy_search(&s), vec![0; 2 * MAX_SYMBOLS_PER_FRAME]);
}

#[test]
fn greedy_is_deterministic() {
    let (model, x) = random_model_input(3);
    assert_eq!(greedy_decode(&model, &x).unwrap(), greedy_decode(&model, &x).unwrap());
}

#[test]
fn width_one_breaks_ties_toward_lower_ids() {
    // symbols 0 and 1 are equally likely at every step
    let s = TableScorer::new(vec![vec![vec![0.3, 0.3, 0.4]; 3]; 1]);
    let top = &beam_search(&s, 1, None).unwrap()[0];
    assert!(top.labels.is_empty() || top.labels.iter().all(|&l| l == 0));
    let s = TableScorer::new(vec![vec![vec![0.45, 0.45, 0.1], vec![0.05, 0.05, 0.9], vec![0.05, 0.05, 0.9]]; 2]);
    let top = &beam_search(&s, 1, None).unwrap()[0];
    assert_eq!(top.labels, vec![0]);
    assert_eq!(greedy_search(&s), top.labels);
}

#[test]
fn zero_width_is_rejected() {
    let s = TableScorer::new(vec![vec![vec![0.3, 0.3, 0.4]; 3]; 1]);
    assert!(beam_search(&s, 0, None).is_err());
}

#[test]
fn merged_scores_are_exact_marginals() {
    let s = toy();
    let hyps = beam_search(&s, 4096, None).unwrap();
    for h in hyps.iter().filter(|h| h.labels.len() <= 3) {
        let want = s.marginal(&h.labels).ln();
        assert!((h.model_score - want).abs() < 1e-12, "{:?}", h.labels);
    }
}

fn toy() -> TableScorer {
    // two symbols plus blank over two frames
    TableScorer::new(vec![
        vec![vec![0.30, 0.10, 0.60], vec![0.05, 0.35, 0.60], vec![0.10, 0.05, 0.85]],
        vec![vec![0.20, 0.15, 0.65], vec![0.05, 0.25, 0.70], vec![0.05, 0.05, 0.90]],
    ])
}

#[test]
fn bias_flips_top_hypothesis_at_the_score_gap() {
    let s = toy();
    let phrase = vec![0usize, 1];
    // every output of length at most 3 over two symbols
    let outputs: Vec<Vec<usize>> = (0..=3usize)
        .flat_map(|len| (0..1usize << len).map(move |code| (0..len).map(|k| (code >> k) & 1).collect()))
        .collect();
    let score = |y: &Vec<usize>, boost: f64| s.marginal(y).ln() + if y.starts_with(&phrase) { 2.0 * boost } else { 0.0 };
    let best = |boost: f64| outputs.iter().max_by(|a, b| score(a, boost).total_cmp(&score(b, boost))).unwrap().clone();
    let unbiased = best(0.0);
    assert_ne!(unbiased, phrase);
    let gap = score(&unbiased, 0.0) - score(&phrase, 0.0);
    assert!(gap > 0.0);
    let ctx = compile_bias(&["ab"], 0.0, 0.0).unwrap();
    for boost in [0.0, 0.5 * gap - 1e-6, 0.5 * gap + 1e-6, 0.4, 0.8, 1.6] {
        let ctx = ctx.with_boost(boost, 0.0).unwrap();
        let top = &beam_search(&s, 4096, Some(&ctx)).unwrap()[0];
        assert!(top.labels.len() <= 3);
        assert_eq!(top.labels, best(boost), "boost {boost}");
    }
    let below = &beam_search(&s, 4096, Some(&ctx.with_boost(0.5 * gap - 1e-6, 0.0).unwrap())).unwrap()[0];
    let above = &beam_search(&s, 4096, Some(&ctx.with_boost(0.5 * gap + 1e-6, 0.0).unwrap())).unwrap()[0];
    assert_eq!(below.labels, unbiased);
    assert_eq!(above.labels, phrase);
}

#[test]
fn zero_boost_is_bit_identical_to_unbiased() {
    for seed in 0..3 {
        let (model, x) = random_model_input(seed);
        let ctx = compile_bias(&["ab", "abc", "zz", "q"], 0.0, 0.0).unwrap();
        for width in [1, 4] {
            let plain = beam_decode(&model, &x, width, None).unwrap();
            let biased = beam_decode(&model, &x, width, Some(&ctx)).unwrap();
            assert_eq!(plain, biased);
        }
    }
}

#[test]
fn final_bias_counts_only_completed_phrases() {
    let phrases = ["a", "ab", "abc", "ba"];
    for seed in 0..3 {
        let (model, x) = random_model_input(seed);
        let ctx = compile_bias(&phrases, 0.7, 0.3).unwrap();
        for h in beam_decode(&model, &x, 6, Some(&ctx)).unwrap() {
            let chars: Vec<char> = h.text.chars().collect();
            let mut want = 0.0;
            for start in (0..chars.len()).filter(|&i| i == 0 || chars[i - 1] == ' ') {
                let rest: String = chars[start..].iter().collect();
                let done: Vec<usize> = phrases.iter().filter(|p| rest.starts_with(**p)).map(|p| p.len()).collect();
                if let Some(&longest) = done.iter().max() {
                    want += 0.7 * longest as f64 + 0.3 * done.len() as f64;
                }
            }
            assert!((h.bias_score - want).abs() < 1e-9, "{:?}: {} vs {want}", h.text, h.bias_score);
            assert_eq!(h.score, h.model_score + h.bias_score);
        }
    }
}

#[test]
fn top_score_grows_with_beam_width() {
    for seed in 0..4 {
        let (model, x) = random_model_input(seed);
        let mut prev = f64::NEG_INFINITY;
        for width in 1..=6 {
            let top = beam_decode(&model, &x, width, None).unwrap()[0].score;
            assert!(top >= prev, "seed {seed} width {width}: {top} < {prev}");
            prev = top;
        }
    }
}
