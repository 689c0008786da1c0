//! Distraction-primed beam search and its scoring primitives.
//!
//! The search is generic over a [`StepDecoder`] so that tests can drive it
//! with scripted step outputs; the real implementation is the model's
//! decode session. Each hypothesis carries its own attention / content /
//! state history, and the per-step distraction terms
//!
//!   d_alpha = min over previous steps of KL(alpha_t, alpha_i)
//!   d_content = max over previous steps of cosine(c_t, c_i)
//!   d_state = max over previous steps of cosine(s_t, s_i)
//!
//! enter the cumulative score as lambda1·d_alpha + lambda2·d_content +
//! lambda3·d_state next to the log-probability of each emitted word.

use crate::error::{Error, Result};
use crate::model::PROB_FLOOR;
use crate::vocab::{Vocabulary, EOD, UNK};

/// KL(p ‖ q) = Σ p_i ln(p_i / q_i). Zero-probability p entries contribute
/// nothing; q is floored at 1e-12 wherever p is positive.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::usage(format!(
            "KL divergence over distributions of different lengths ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            total += pi * (pi / qi.max(1e-12)).ln();
        }
    }
    Ok(total)
}

/// Cosine similarity in [−1, 1]; either vector being zero gives 0.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine over vectors of different lengths");
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Signed coefficients on the three decode-time distraction terms. Larger
/// d_alpha means the attention moved somewhere new (reward it with a
/// positive lambda1); larger d_content / d_state mean the decoder is
/// revisiting old content (penalize with negative lambda2, lambda3). All
/// zero reduces to plain log-probability beam search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistractionWeights {
    pub attention: f64,
    pub content: f64,
    pub state: f64,
}

impl DistractionWeights {
    pub const ZERO: DistractionWeights = DistractionWeights {
        attention: 0.0,
        content: 0.0,
        state: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        self.attention == 0.0 && self.content == 0.0 && self.state == 0.0
    }
}

impl Default for DistractionWeights {
    fn default() -> Self {
        DistractionWeights { attention: 0.1, content: -0.1, state: -0.1 }
    }
}

/// Distraction terms of the current step against the hypothesis's own
/// history. Empty history (the first step) gives (0, 0, 0).
pub fn distraction_scores(
    alpha: &[f64],
    content: &[f64],
    state: &[f64],
    alpha_history: &[Vec<f64>],
    content_history: &[Vec<f64>],
    state_history: &[Vec<f64>],
) -> (f64, f64, f64) {
    let d_alpha = alpha_history
        .iter()
        .map(|prev| kl_divergence(alpha, prev).expect("history shapes match"))
        .fold(f64::INFINITY, f64::min);
    let d_alpha = if d_alpha.is_finite() { d_alpha } else { 0.0 };
    let max_cos = |current: &[f64], history: &[Vec<f64>]| {
        history
            .iter()
            .map(|prev| cosine_similarity(current, prev))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let d_content = if content_history.is_empty() { 0.0 } else { max_cos(content, content_history) };
    let d_state = if state_history.is_empty() { 0.0 } else { max_cos(state, state_history) };
    (d_alpha, d_content, d_state)
}

/// What a decoder produces for one step: the word distribution and the
/// step's attention weights, content vector, and hidden state.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub content: Vec<f64>,
    pub state: Vec<f64>,
}

/// Stepwise decoding interface. The first step is taken with
/// `y_prev = EOD`, the document terminator doubling as the start symbol.
pub trait StepDecoder {
    type State: Clone;

    fn initial_state(&self) -> Self::State;
    fn vocab_size(&self) -> usize;
    fn step(&mut self, state: &Self::State, y_prev: u32) -> (Self::State, StepOutput);
}

#[derive(Debug, Clone)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_len: usize,
    pub weights: DistractionWeights,
    /// Compare hypotheses by score / length instead of the raw cumulative
    /// sum. Off by default.
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 5,
            max_len: 100,
            weights: DistractionWeights::default(),
            length_normalize: false,
        }
    }
}

/// One partial or finished output sequence.
#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    pub tokens: Vec<u32>,
    /// Σ log p of the emitted words.
    pub log_prob: f64,
    /// Σ of the weighted distraction terms, accumulated as steps are taken.
    pub distraction_bonus: f64,
    pub alphas: Vec<Vec<f64>>,
    pub contents: Vec<Vec<f64>>,
    pub states: Vec<Vec<f64>>,
    pub state: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Cumulative score: log-probability plus distraction bonus.
    pub fn score(&self) -> f64 {
        self.log_prob + self.distraction_bonus
    }

    fn comparable(&self, normalize: bool) -> f64 {
        if normalize {
            self.score() / self.tokens.len().max(1) as f64
        } else {
            self.score()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BeamResult<S> {
    /// Finished hypotheses, best first. If nothing emitted EOD within the
    /// length budget these are the best incomplete hypotheses instead.
    pub hypotheses: Vec<Hypothesis<S>>,
    /// True when no hypothesis finished and the results were cut at
    /// `max_len`.
    pub truncated: bool,
}

/// Per-step selection diagnostics: the worst kept and best pruned
/// cumulative candidate scores.
#[derive(Debug, Clone, Copy)]
pub struct SelectionSummary {
    pub kept_min: f64,
    pub pruned_max: Option<f64>,
}

struct Candidate {
    parent: usize,
    word: u32,
    log_prob: f64,
    bonus: f64,
    length: usize,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.log_prob + self.bonus
    }

    fn comparable(&self, normalize: bool) -> f64 {
        if normalize {
            self.score() / self.length as f64
        } else {
            self.score()
        }
    }
}

pub fn beam_search<D: StepDecoder>(
    decoder: &mut D,
    config: &BeamConfig,
) -> Result<BeamResult<D::State>> {
    Ok(beam_search_traced(decoder, config)?.0)
}

/// Beam search that also reports per-step selection summaries, for
/// diagnostics and the selection-optimality tests.
pub fn beam_search_traced<D: StepDecoder>(
    decoder: &mut D,
    config: &BeamConfig,
) -> Result<(BeamResult<D::State>, Vec<SelectionSummary>)> {
    if config.beam_size == 0 || config.max_len == 0 {
        return Err(Error::usage("beam size and max length must be at least 1"));
    }
    let k = decoder.vocab_size();
    let mut live: Vec<Hypothesis<D::State>> = Vec::new();
    let mut finished: Vec<Hypothesis<D::State>> = Vec::new();
    let mut trace = Vec::new();

    for step in 1..=config.max_len {
        // Expand: every live hypothesis contributes K candidates sharing
        // that hypothesis's step outputs and distraction terms (those
        // depend only on the trajectory so far, not the word about to be
        // chosen).
        let mut expansions: Vec<(D::State, StepOutput, f64)> = Vec::new();
        let mut candidates: Vec<Candidate> = Vec::new();
        if step == 1 {
            let start = decoder.initial_state();
            let (next, out) = decoder.step(&start, EOD);
            for word in 0..k as u32 {
                candidates.push(Candidate {
                    parent: 0,
                    word,
                    log_prob: out.probs[word as usize].max(PROB_FLOOR).ln(),
                    bonus: 0.0,
                    length: 1,
                });
            }
            expansions.push((next, out, 0.0));
        } else {
            for (parent, hyp) in live.iter().enumerate() {
                let (next, out) = decoder.step(&hyp.state, *hyp.tokens.last().expect("non-empty"));
                let (d_alpha, d_content, d_state) = distraction_scores(
                    &out.alpha,
                    &out.content,
                    &out.state,
                    &hyp.alphas,
                    &hyp.contents,
                    &hyp.states,
                );
                let step_bonus = config.weights.attention * d_alpha
                    + config.weights.content * d_content
                    + config.weights.state * d_state;
                for word in 0..k as u32 {
                    candidates.push(Candidate {
                        parent,
                        word,
                        log_prob: hyp.log_prob + out.probs[word as usize].max(PROB_FLOOR).ln(),
                        bonus: hyp.distraction_bonus + step_bonus,
                        length: step,
                    });
                }
                expansions.push((next, out, step_bonus));
            }
        }
        if candidates.is_empty() {
            break;
        }

        // Keep the top B by cumulative score; ties resolved by parent then
        // word id so runs are reproducible byte for byte.
        candidates.sort_unstable_by(|a, b| {
            b.comparable(config.length_normalize)
                .partial_cmp(&a.comparable(config.length_normalize))
                .expect("finite scores")
                .then(a.parent.cmp(&b.parent))
                .then(a.word.cmp(&b.word))
        });
        let keep = config.beam_size.min(candidates.len());
        trace.push(SelectionSummary {
            kept_min: candidates[keep - 1].comparable(config.length_normalize),
            pruned_max: candidates
                .get(keep)
                .map(|c| c.comparable(config.length_normalize)),
        });

        let mut next_live = Vec::with_capacity(keep);
        for cand in &candidates[..keep] {
            let (state, out, _) = &expansions[cand.parent];
            let parent_hyp = if step == 1 { None } else { Some(&live[cand.parent]) };
            let mut tokens = parent_hyp.map(|h| h.tokens.clone()).unwrap_or_default();
            tokens.push(cand.word);
            let mut alphas = parent_hyp.map(|h| h.alphas.clone()).unwrap_or_default();
            let mut contents = parent_hyp.map(|h| h.contents.clone()).unwrap_or_default();
            let mut states = parent_hyp.map(|h| h.states.clone()).unwrap_or_default();
            alphas.push(out.alpha.clone());
            contents.push(out.content.clone());
            states.push(out.state.clone());
            let hyp = Hypothesis {
                tokens,
                log_prob: cand.log_prob,
                distraction_bonus: cand.bonus,
                alphas,
                contents,
                states,
                state: state.clone(),
                finished: cand.word == EOD,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    let truncated = finished.is_empty();
    let mut pool = if truncated { live } else { finished };
    pool.sort_by(|a, b| {
        b.comparable(config.length_normalize)
            .partial_cmp(&a.comparable(config.length_normalize))
            .expect("finite scores")
            .then(a.tokens.cmp(&b.tokens))
    });
    Ok((BeamResult { hypotheses: pool, truncated }, trace))
}

/// Replace every UNK in a decoded id sequence by the source token under the
/// step's attention argmax (smallest index on ties). Other ids map through
/// the vocabulary.
pub fn unk_replace(
    ids: &[u32],
    alphas: &[Vec<f64>],
    source_tokens: &[String],
    vocab: &Vocabulary,
) -> Vec<String> {
    assert_eq!(ids.len(), alphas.len(), "one attention vector per output step");
    ids.iter()
        .zip(alphas)
        .map(|(&id, alpha)| {
            if id == UNK && !source_tokens.is_empty() {
                let mut best = 0;
                for (i, &w) in alpha.iter().enumerate() {
                    if w > alpha[best] {
                        best = i;
                    }
                }
                source_tokens[best.min(source_tokens.len() - 1)].clone()
            } else {
                vocab.token(id).to_string()
            }
        })
        .collect()
}

/// Strip the terminating EOD, then UNK-replace: the finished hypothesis
/// becomes the emitted token sequence.
pub fn finalize_summary<S>(
    hyp: &Hypothesis<S>,
    source_tokens: &[String],
    vocab: &Vocabulary,
) -> Vec<String> {
    let mut ids = hyp.tokens.as_slice();
    let mut alphas = hyp.alphas.as_slice();
    if ids.last() == Some(&EOD) {
        ids = &ids[..ids.len() - 1];
        alphas = &alphas[..alphas.len() - 1];
    }
    unk_replace(ids, alphas, source_tokens, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_identical_distributions_is_zero() {
        let p = vec![0.2, 0.5, 0.3];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_closed_form_case() {
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_direct_summation() {
        // Oracle: direct scalar summation.
        let p = [0.3, 0.7];
        let q = [0.6, 0.4];
        let expect = 0.3 * (0.3f64 / 0.6).ln() + 0.7 * (0.7f64 / 0.4).ln();
        let d = kl_divergence(&p, &q).unwrap();
        assert!((d - expect).abs() < 1e-15);
        // Frozen from the same oracle.
        assert!((d - 0.18378689738681217).abs() < 1e-15);
    }

    #[test]
    fn kl_rejects_length_mismatch() {
        assert!(kl_divergence(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn cosine_reference_cases() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 1.0]) - 0.8).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn distraction_scores_empty_history_is_zero() {
        let (a, c, s) = distraction_scores(&[0.5, 0.5], &[1.0], &[2.0], &[], &[], &[]);
        assert_eq!((a, c, s), (0.0, 0.0, 0.0));
    }

    #[test]
    fn distraction_scores_identity_cases() {
        let alpha = vec![0.25, 0.75];
        let content = vec![0.3, -0.4];
        let state = vec![1.5, 2.5];
        let (a, c, s) = distraction_scores(
            &alpha,
            &content,
            &state,
            &[alpha.clone()],
            &[content.clone()],
            &[state.clone()],
        );
        assert_eq!(a, 0.0);
        assert!((c - 1.0).abs() < 1e-15);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distraction_scores_match_direct_enumeration() {
        let alpha = vec![0.6, 0.4];
        let content = vec![1.0, 0.0];
        let state = vec![0.0, 1.0];
        let alpha_hist = vec![vec![0.5, 0.5], vec![0.9, 0.1]];
        let content_hist = vec![vec![1.0, 1.0], vec![-1.0, 0.0]];
        let state_hist = vec![vec![0.0, -1.0], vec![1.0, 1.0]];

        let (a, c, s) = distraction_scores(
            &alpha, &content, &state, &alpha_hist, &content_hist, &state_hist,
        );
        let a_expect = kl_divergence(&alpha, &alpha_hist[0])
            .unwrap()
            .min(kl_divergence(&alpha, &alpha_hist[1]).unwrap());
        let c_expect = cosine_similarity(&content, &content_hist[0])
            .max(cosine_similarity(&content, &content_hist[1]));
        let s_expect = cosine_similarity(&state, &state_hist[0])
            .max(cosine_similarity(&state, &state_hist[1]));
        assert_eq!(a, a_expect);
        assert_eq!(c, c_expect);
        assert_eq!(s, s_expect);
    }

    /// Deterministic scripted decoder: step outputs are pure functions of
    /// (step index, previous word), so different beam paths accrue
    /// different histories.
    pub struct TableDecoder {
        pub k: usize,
        pub dim: usize,
    }

    fn mix(seed: u64) -> f64 {
        // splitmix-style scramble into (0, 1)
        let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    impl TableDecoder {
        pub fn output(&self, step: usize, y_prev: u32) -> StepOutput {
            let tag = (step as u64) << 32 | y_prev as u64;
            let raw: Vec<f64> = (0..self.k).map(|w| mix(tag ^ (w as u64) << 16) + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let raw_alpha: Vec<f64> =
                (0..self.dim).map(|i| mix(tag ^ 0xa1fa ^ (i as u64) << 8) + 0.05).collect();
            let alpha_total: f64 = raw_alpha.iter().sum();
            StepOutput {
                alpha: raw_alpha.iter().map(|v| v / alpha_total).collect(),
                content: (0..self.dim).map(|i| mix(tag ^ 0xc0 ^ (i as u64) << 8) - 0.5).collect(),
                state: (0..self.dim).map(|i| mix(tag ^ 0x57 ^ (i as u64) << 8) - 0.5).collect(),
                probs,
            }
        }
    }

    impl StepDecoder for TableDecoder {
        type State = usize;

        fn initial_state(&self) -> usize {
            1
        }

        fn vocab_size(&self) -> usize {
            self.k
        }

        fn step(&mut self, state: &usize, y_prev: u32) -> (usize, StepOutput) {
            (*state + 1, self.output(*state, y_prev))
        }
    }

    /// Brute-force Eq-17-style scorer: replay a full sequence through the
    /// table decoder, accumulating log-probs and distraction terms.
    pub fn brute_force_score(
        decoder: &TableDecoder,
        sequence: &[u32],
        weights: &DistractionWeights,
    ) -> f64 {
        let mut y_prev = EOD;
        let mut score = 0.0;
        let mut alphas: Vec<Vec<f64>> = Vec::new();
        let mut contents: Vec<Vec<f64>> = Vec::new();
        let mut states: Vec<Vec<f64>> = Vec::new();
        for (t, &w) in sequence.iter().enumerate() {
            let out = decoder.output(t + 1, y_prev);
            let (da, dc, ds) =
                distraction_scores(&out.alpha, &out.content, &out.state, &alphas, &contents, &states);
            score += out.probs[w as usize].max(PROB_FLOOR).ln();
            score += weights.attention * da + weights.content * dc + weights.state * ds;
            alphas.push(out.alpha);
            contents.push(out.content);
            states.push(out.state);
            y_prev = w;
        }
        score
    }

    /// All sequences that terminate within `max_len`: either ending with
    /// EOD (with no earlier EOD) or of exactly `max_len` tokens.
    pub fn enumerate_terminated(k: usize, max_len: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut stack: Vec<Vec<u32>> = vec![vec![]];
        while let Some(prefix) = stack.pop() {
            for w in 0..k as u32 {
                let mut seq = prefix.clone();
                seq.push(w);
                if w == EOD || seq.len() == max_len {
                    out.push(seq);
                } else {
                    stack.push(seq);
                }
            }
        }
        out
    }

    #[test]
    fn beam_one_equals_greedy() {
        let mut decoder = TableDecoder { k: 5, dim: 3 };
        let config = BeamConfig {
            beam_size: 1,
            max_len: 6,
            weights: DistractionWeights::ZERO,
            length_normalize: false,
        };
        let result = beam_search(&mut decoder, &config).unwrap();

        // Independent greedy rollout.
        let mut greedy = Vec::new();
        let mut y_prev = EOD;
        let reference = TableDecoder { k: 5, dim: 3 };
        for step in 1..=6 {
            let out = reference.output(step, y_prev);
            let mut best = 0;
            for w in 0..5 {
                if out.probs[w] > out.probs[best] {
                    best = w;
                }
            }
            greedy.push(best as u32);
            y_prev = best as u32;
            if best as u32 == EOD {
                break;
            }
        }
        assert_eq!(result.hypotheses[0].tokens, greedy);
    }

    #[test]
    fn wide_beam_matches_exhaustive_enumeration_with_zero_weights() {
        let k = 4;
        let n = 3;
        let mut decoder = TableDecoder { k, dim: 3 };
        let config = BeamConfig {
            beam_size: 64,
            max_len: n,
            weights: DistractionWeights::ZERO,
            length_normalize: false,
        };
        let result = beam_search(&mut decoder, &config).unwrap();
        let reference = TableDecoder { k, dim: 3 };
        let best = enumerate_terminated(k, n)
            .into_iter()
            .filter(|s| s.last() == Some(&EOD))
            .map(|s| {
                let score = brute_force_score(&reference, &s, &DistractionWeights::ZERO);
                (s, score)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(result.hypotheses[0].tokens, best.0);
        assert!((result.hypotheses[0].score() - best.1).abs() < 1e-10);
    }

    #[test]
    fn wide_beam_matches_brute_force_with_distraction_weights() {
        let k = 4;
        let n = 3;
        let weights = DistractionWeights { attention: 0.7, content: -0.9, state: -0.4 };
        let mut decoder = TableDecoder { k, dim: 3 };
        let config = BeamConfig {
            beam_size: 64,
            max_len: n,
            weights,
            length_normalize: false,
        };
        let result = beam_search(&mut decoder, &config).unwrap();
        let reference = TableDecoder { k, dim: 3 };
        let best = enumerate_terminated(k, n)
            .into_iter()
            .filter(|s| s.last() == Some(&EOD))
            .map(|s| {
                let score = brute_force_score(&reference, &s, &weights);
                (s, score)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(result.hypotheses[0].tokens, best.0);
        assert!((result.hypotheses[0].score() - best.1).abs() < 1e-10);
    }

    #[test]
    fn hypothesis_score_is_recomputable_from_stored_history() {
        let weights = DistractionWeights { attention: 0.3, content: -0.6, state: -0.2 };
        let mut decoder = TableDecoder { k: 5, dim: 4 };
        let config = BeamConfig { beam_size: 3, max_len: 5, weights, length_normalize: false };
        let result = beam_search(&mut decoder, &config).unwrap();
        let reference = TableDecoder { k: 5, dim: 4 };
        for hyp in &result.hypotheses {
            let replay = brute_force_score(&reference, &hyp.tokens, &weights);
            assert!((hyp.score() - replay).abs() < 1e-10);
        }
    }

    #[test]
    fn kept_candidates_always_outscore_pruned_ones() {
        let mut decoder = TableDecoder { k: 6, dim: 3 };
        let config = BeamConfig {
            beam_size: 2,
            max_len: 5,
            weights: DistractionWeights { attention: 0.5, content: -0.5, state: -0.5 },
            length_normalize: false,
        };
        let (_, trace) = beam_search_traced(&mut decoder, &config).unwrap();
        assert!(!trace.is_empty());
        for step in trace {
            if let Some(pruned) = step.pruned_max {
                assert!(step.kept_min >= pruned - 1e-12);
            }
        }
    }

    #[test]
    fn finished_hypotheses_are_never_extended() {
        let mut decoder = TableDecoder { k: 4, dim: 3 };
        let config = BeamConfig {
            beam_size: 8,
            max_len: 6,
            weights: DistractionWeights::ZERO,
            length_normalize: false,
        };
        let result = beam_search(&mut decoder, &config).unwrap();
        for hyp in &result.hypotheses {
            let eod_positions: Vec<usize> = hyp
                .tokens
                .iter()
                .enumerate()
                .filter(|(_, &w)| w == EOD)
                .map(|(i, _)| i)
                .collect();
            assert!(eod_positions.len() <= 1);
            if let Some(&pos) = eod_positions.first() {
                assert_eq!(pos, hyp.tokens.len() - 1);
            }
        }
    }

    #[test]
    fn truncated_flag_set_when_nothing_finishes() {
        // A decoder that never gives EOD any probability mass.
        struct NoEod;
        impl StepDecoder for NoEod {
            type State = usize;
            fn initial_state(&self) -> usize {
                1
            }
            fn vocab_size(&self) -> usize {
                5
            }
            fn step(&mut self, state: &usize, _y_prev: u32) -> (usize, StepOutput) {
                let mut probs = vec![0.25; 5];
                probs[EOD as usize] = 0.0;
                (
                    state + 1,
                    StepOutput {
                        probs,
                        alpha: vec![0.5, 0.5],
                        content: vec![1.0, 0.0],
                        state: vec![0.0, 1.0],
                    },
                )
            }
        }
        let result = beam_search(&mut NoEod, &BeamConfig {
            beam_size: 2,
            max_len: 4,
            weights: DistractionWeights::ZERO,
            length_normalize: false,
        })
        .unwrap();
        assert!(result.truncated);
        assert_eq!(result.hypotheses[0].tokens.len(), 4);
    }

    fn tiny_vocab() -> Vocabulary {
        use crate::corpus::DocumentPair;
        let pair = DocumentPair {
            sentences: vec![vec!["alpha".into(), "beta".into(), "gamma".into()]],
            summary: vec!["alpha".into()],
        };
        Vocabulary::build(&[pair], 10).unwrap()
    }

    #[test]
    fn unk_replace_leaves_known_tokens_alone() {
        let vocab = tiny_vocab();
        let ids = vec![vocab.id("alpha"), vocab.id("beta")];
        let alphas = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let source: Vec<String> = vec!["x".into(), "y".into()];
        let out = unk_replace(&ids, &alphas, &source, &vocab);
        assert_eq!(out, vec!["alpha", "beta"]);
    }

    #[test]
    fn unk_replace_uses_attention_argmax() {
        let vocab = tiny_vocab();
        let ids = vec![UNK, vocab.id("beta"), UNK];
        let alphas = vec![
            vec![0.1, 0.1, 0.1, 0.7],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.2, 0.6, 0.1, 0.1],
        ];
        let source: Vec<String> = ["tok0", "tok1", "tok2", "tok3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = unk_replace(&ids, &alphas, &source, &vocab);
        assert_eq!(out, vec!["tok3", "beta", "tok1"]);
    }

    #[test]
    fn unk_replace_breaks_ties_toward_smaller_index() {
        let vocab = tiny_vocab();
        let ids = vec![UNK];
        let alphas = vec![vec![0.4, 0.4, 0.2]];
        let source: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(unk_replace(&ids, &alphas, &source, &vocab), vec!["a"]);
    }
}
