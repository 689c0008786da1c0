//! ROUGE-1, ROUGE-2, and ROUGE-L F1 scoring.
//!
//! Clipped n-gram overlap for ROUGE-N, longest common subsequence for
//! ROUGE-L, macro-averaged over documents. No stemming or stopword
//! handling; character-mode corpora are scored over their character tokens.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Precision, recall, F1; all in [0, 1] with F1 = 0 when P + R = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(precision: f64, recall: f64) -> Prf {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// The three metrics for one document or a corpus average.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap: precision against the candidate's n-gram count,
/// recall against the reference's. Either side shorter than `n` scores 0.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Prf {
    assert!(n == 1 || n == 2, "rouge_n supports n = 1 or 2");
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let cand_total: usize = candidate.len().saturating_sub(n - 1);
    let ref_total: usize = reference.len().saturating_sub(n - 1);
    if cand_total == 0 || ref_total == 0 {
        return Prf::default();
    }
    let overlap: usize = cand
        .iter()
        .map(|(gram, count)| count.min(refc.get(gram).unwrap_or(&0)))
        .sum();
    Prf::new(overlap as f64 / cand_total as f64, overlap as f64 / ref_total as f64)
}

fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Longest-common-subsequence F1: P = LCS/|candidate|, R = LCS/|reference|.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let lcs = lcs_length(candidate, reference) as f64;
    Prf::new(lcs / candidate.len() as f64, lcs / reference.len() as f64)
}

pub fn score_pair(candidate: &[String], reference: &[String]) -> RougeScore {
    RougeScore {
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
    }
}

/// Macro average: arithmetic mean of per-document precision, recall, and F1.
pub fn corpus_rouge(pairs: &[(Vec<String>, Vec<String>)]) -> Result<RougeScore> {
    if pairs.is_empty() {
        return Err(Error::usage("cannot average ROUGE over an empty corpus"));
    }
    let mut total = [Prf::default(); 3];
    for (candidate, reference) in pairs {
        let s = score_pair(candidate, reference);
        for (acc, part) in total.iter_mut().zip([s.rouge1, s.rouge2, s.rouge_l]) {
            acc.precision += part.precision;
            acc.recall += part.recall;
            acc.f1 += part.f1;
        }
    }
    let n = pairs.len() as f64;
    for acc in &mut total {
        acc.precision /= n;
        acc.recall /= n;
        acc.f1 /= n;
    }
    Ok(RougeScore { rouge1: total[0], rouge2: total[1], rouge_l: total[2] })
}

/// The key=value report emitted by the evaluate command.
pub fn report(score: &RougeScore) -> String {
    let mut out = String::new();
    for (name, part) in [
        ("rouge1", score.rouge1),
        ("rouge2", score.rouge2),
        ("rougeL", score.rouge_l),
    ] {
        out.push_str(&format!(
            "{name}_precision={:.6}\n{name}_recall={:.6}\n{name}_f1={:.6}\n",
            part.precision, part.recall, part.f1
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn identical_sequences_score_one() {
        let t = toks("the quick brown fox");
        let s = score_pair(&t, &t);
        assert_eq!(s.rouge1.f1, 1.0);
        assert_eq!(s.rouge2.f1, 1.0);
        assert_eq!(s.rouge_l.f1, 1.0);
    }

    #[test]
    fn disjoint_sequences_score_zero() {
        let s = score_pair(&toks("a b c"), &toks("x y z"));
        assert_eq!(s.rouge1.f1, 0.0);
        assert_eq!(s.rouge2.f1, 0.0);
        assert_eq!(s.rouge_l.f1, 0.0);
    }

    #[test]
    fn unigram_overlap_hand_count() {
        // cand "the cat sat" vs ref "the cat": overlap 2, P = 2/3, R = 1.
        let p = rouge_n(&toks("the cat sat"), &toks("the cat"), 1);
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 1.0).abs() < 1e-12);
        assert!((p.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn bigram_overlap_clips_repeats() {
        // cand "a a a" has bigrams {aa: 2}; ref "a a" has {aa: 1} → clip 1.
        let p = rouge_n(&toks("a a a"), &toks("a a"), 2);
        assert!((p.precision - 0.5).abs() < 1e-12);
        assert!((p.recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_sides_score_zero() {
        let p = rouge_n(&toks("single"), &toks("a b"), 2);
        assert_eq!(p.f1, 0.0);
        let p = rouge_n(&[], &toks("a"), 1);
        assert_eq!(p.f1, 0.0);
    }

    #[test]
    fn lcs_hand_case() {
        // cand "a c b" vs ref "a b c": LCS = 2, P = R = 2/3, F1 = 2/3.
        let p = rouge_l(&toks("a c b"), &toks("a b c"));
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lcs_single_shared_token() {
        let p = rouge_l(&toks("q w shared e"), &toks("z shared x"));
        assert!((p.precision - 0.25).abs() < 1e-12);
        assert!((p.recall - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge1_is_permutation_invariant_but_rouge_l_is_not() {
        let a = toks("one two three four");
        let b = toks("four three two one");
        let r = toks("one two three");
        assert_eq!(rouge_n(&a, &r, 1), rouge_n(&b, &r, 1));
        assert_ne!(rouge_l(&a, &r), rouge_l(&b, &r));
    }

    #[test]
    fn swap_symmetry_of_precision_and_recall() {
        let c = toks("a b c d");
        let r = toks("a b x");
        let forward = rouge_n(&c, &r, 1);
        let backward = rouge_n(&r, &c, 1);
        assert_eq!(forward.precision, backward.recall);
        assert_eq!(forward.recall, backward.precision);
        assert_eq!(forward.f1, backward.f1);
    }

    #[test]
    fn corpus_average_of_singleton_equals_pair_score() {
        let pair = (toks("the cat sat"), toks("the cat"));
        let per_pair = score_pair(&pair.0, &pair.1);
        let avg = corpus_rouge(&[pair.clone()]).unwrap();
        assert_eq!(avg.rouge1, per_pair.rouge1);
        let twice = corpus_rouge(&[pair.clone(), pair]).unwrap();
        assert_eq!(twice.rouge1, per_pair.rouge1);
    }

    #[test]
    fn corpus_average_matches_hand_mean() {
        let pairs = vec![
            (toks("the cat sat"), toks("the cat")),   // R1 f1 = 0.8
            (toks("a b c"), toks("x y z")),           // R1 f1 = 0.0
        ];
        let avg = corpus_rouge(&pairs).unwrap();
        assert!((avg.rouge1.f1 - 0.4).abs() < 1e-12);
        assert!(corpus_rouge(&[]).is_err());
    }

    #[test]
    fn scores_stay_in_unit_interval_and_f1_below_max() {
        let cases = [
            ("the cat sat on the mat", "the cat"),
            ("a b a b a", "b a"),
            ("x", "x y z w"),
            ("m n o p q", "m n o p q r s"),
        ];
        for (c, r) in cases {
            let s = score_pair(&toks(c), &toks(r));
            for part in [s.rouge1, s.rouge2, s.rouge_l] {
                for v in [part.precision, part.recall, part.f1] {
                    assert!((0.0..=1.0).contains(&v));
                }
                assert!(part.f1 <= part.precision.max(part.recall) + 1e-12);
            }
        }
    }

    #[test]
    fn report_contains_the_three_required_keys() {
        let s = score_pair(&toks("a b"), &toks("a b"));
        let r = report(&s);
        assert!(r.contains("rouge1_f1=1.000000"));
        assert!(r.contains("rouge2_f1=1.000000"));
        assert!(r.contains("rougeL_f1=1.000000"));
    }
}
