//! Corpus ingestion, id encoding, and length-sorted mini-batching.
//!
//! Corpus files are UTF-8 JSON lines, one object per line:
//! `{"sentences": [["tok", ...], ...], "summary": ["tok", ...]}`.
//! Input is expected pre-tokenized; character mode re-splits every token
//! into characters for corpora tokenized that way.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{Vocabulary, EOD, EOS, PAD};

/// One document with its reference summary. The summary may be empty for
/// inference-only inputs; training requires it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentPair {
    pub sentences: Vec<Vec<String>>,
    #[serde(default)]
    pub summary: Vec<String>,
}

impl DocumentPair {
    /// Word tokens in the document, before EOS/EOD insertion.
    pub fn document_len(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    fn validate(&self, line: usize) -> Result<()> {
        if self.sentences.is_empty() || self.sentences.iter().all(|s| s.is_empty()) {
            return Err(Error::format(format!(
                "line {line}: document must contain at least one token"
            )));
        }
        Ok(())
    }

    /// Re-tokenize every token into single characters, keeping sentence
    /// boundaries.
    pub fn to_char_mode(&self) -> DocumentPair {
        let split = |tokens: &[String]| -> Vec<String> {
            tokens
                .iter()
                .flat_map(|t| t.chars().map(|c| c.to_string()))
                .collect()
        };
        DocumentPair {
            sentences: self.sentences.iter().map(|s| split(s)).collect(),
            summary: split(&self.summary),
        }
    }
}

pub fn read_corpus(path: &Path, char_mode: bool) -> Result<Vec<DocumentPair>> {
    let file = File::open(path).map_err(|e| {
        Error::usage(format!("cannot open corpus file {}: {e}", path.display()))
    })?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: DocumentPair = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?;
        pair.validate(i + 1)?;
        pairs.push(if char_mode { pair.to_char_mode() } else { pair });
    }
    Ok(pairs)
}

/// Source and target id sequences for one pair. The source carries EOS
/// between sentences and a final EOD; the target ends with EOD.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

pub fn encode(pair: &DocumentPair, vocab: &Vocabulary) -> EncodedPair {
    let mut source = Vec::with_capacity(pair.document_len() + pair.sentences.len());
    for (i, sentence) in pair.sentences.iter().enumerate() {
        if i > 0 {
            source.push(EOS);
        }
        source.extend(sentence.iter().map(|t| vocab.id(t)));
    }
    source.push(EOD);
    let mut target: Vec<u32> = pair.summary.iter().map(|t| vocab.id(t)).collect();
    target.push(EOD);
    EncodedPair { source, target }
}

/// Source token strings aligned position-for-position with the encoded
/// source sequence, for attention-based UNK replacement.
pub fn aligned_source_tokens(pair: &DocumentPair) -> Vec<String> {
    let mut out = Vec::with_capacity(pair.document_len() + pair.sentences.len());
    for (i, sentence) in pair.sentences.iter().enumerate() {
        if i > 0 {
            out.push("<eos>".to_string());
        }
        out.extend(sentence.iter().cloned());
    }
    out.push("<eod>".to_string());
    out
}

/// Padded id matrices with masks. Masks are true exactly on non-PAD
/// positions; `source_lens`/`target_lens` carry the true lengths.
#[derive(Debug, Clone)]
pub struct Batch {
    pub source: Vec<Vec<u32>>,
    pub source_mask: Vec<Vec<bool>>,
    pub target: Vec<Vec<u32>>,
    pub target_mask: Vec<Vec<bool>>,
    pub source_lens: Vec<usize>,
    pub target_lens: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Unpadded (source, target) of example `i`.
    pub fn example(&self, i: usize) -> (&[u32], &[u32]) {
        (
            &self.source[i][..self.source_lens[i]],
            &self.target[i][..self.target_lens[i]],
        )
    }

    pub fn target_tokens(&self) -> usize {
        self.target_lens.iter().sum()
    }

    fn from_examples(examples: &[&EncodedPair]) -> Batch {
        let max_src = examples.iter().map(|e| e.source.len()).max().unwrap_or(0);
        let max_tgt = examples.iter().map(|e| e.target.len()).max().unwrap_or(0);
        let pad_to = |ids: &[u32], width: usize| {
            let mut row = ids.to_vec();
            row.resize(width, PAD);
            let mut mask = vec![true; ids.len()];
            mask.resize(width, false);
            (row, mask)
        };
        let mut batch = Batch {
            source: Vec::new(),
            source_mask: Vec::new(),
            target: Vec::new(),
            target_mask: Vec::new(),
            source_lens: Vec::new(),
            target_lens: Vec::new(),
        };
        for e in examples {
            let (row, mask) = pad_to(&e.source, max_src);
            batch.source.push(row);
            batch.source_mask.push(mask);
            let (row, mask) = pad_to(&e.target, max_tgt);
            batch.target.push(row);
            batch.target_mask.push(mask);
            batch.source_lens.push(e.source.len());
            batch.target_lens.push(e.target.len());
        }
        batch
    }
}

/// Number of consecutive batches that share one length-sorted bucket.
const BUCKET_BATCHES: usize = 16;

/// Shuffle, sort by source length within buckets, cut into batches, then
/// shuffle the batch order. Deterministic for a fixed seed.
pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);

    let bucket = batch_size * BUCKET_BATCHES;
    let mut batches = Vec::new();
    for chunk in order.chunks(bucket) {
        let mut chunk = chunk.to_vec();
        chunk.sort_by_key(|&i| pairs[i].source.len());
        for group in chunk.chunks(batch_size) {
            let examples: Vec<&EncodedPair> = group.iter().map(|&i| &pairs[i]).collect();
            batches.push(Batch::from_examples(&examples));
        }
    }
    batches.shuffle(&mut rng);
    batches
}

/// JSONL line per summary: `{"summary": ["tok", ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub summary: Vec<String>,
}

pub fn write_summaries(path: &Path, summaries: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    for tokens in summaries {
        out.push_str(&serde_json::to_string(&SummaryRecord { summary: tokens.clone() }).expect("serializable"));
        out.push('\n');
    }
    let mut file = File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Read the `summary` field of every line of a corpus- or summary-format
/// JSONL file.
pub fn read_summaries(path: &Path, char_mode: bool) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|e| {
        Error::usage(format!("cannot open summaries file {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SummaryRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?;
        let tokens = if char_mode {
            record
                .summary
                .iter()
                .flat_map(|t| t.chars().map(|c| c.to_string()))
                .collect()
        } else {
            record.summary
        };
        out.push(tokens);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{UNK, EOD, EOS};

    fn pair(sentences: &[&[&str]], summary: &[&str]) -> DocumentPair {
        DocumentPair {
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|t| t.to_string()).collect())
                .collect(),
            summary: summary.iter().map(|t| t.to_string()).collect(),
        }
    }

    fn vocab_for(pairs: &[DocumentPair]) -> Vocabulary {
        Vocabulary::build(pairs, 100).unwrap()
    }

    #[test]
    fn encode_inserts_sentence_and_document_markers() {
        let p = pair(&[&["a", "b"], &["c"]], &["b"]);
        let v = vocab_for(std::slice::from_ref(&p));
        let e = encode(&p, &v);
        assert_eq!(
            e.source,
            vec![v.id("a"), v.id("b"), EOS, v.id("c"), EOD]
        );
        assert_eq!(e.target, vec![v.id("b"), EOD]);
    }

    #[test]
    fn out_of_vocabulary_tokens_become_unk() {
        let p = pair(&[&["a"]], &["a"]);
        let v = vocab_for(std::slice::from_ref(&p));
        let q = pair(&[&["a", "zzz"]], &["zzz"]);
        let e = encode(&q, &v);
        assert_eq!(e.source, vec![v.id("a"), UNK, EOD]);
        assert_eq!(e.target, vec![UNK, EOD]);
    }

    #[test]
    fn encode_round_trips_in_vocabulary_tokens() {
        let p = pair(&[&["x", "y"], &["z"]], &["y", "z"]);
        let v = vocab_for(std::slice::from_ref(&p));
        let e = encode(&p, &v);
        let decoded: Vec<&str> = e.source.iter().map(|&id| v.token(id)).collect();
        assert_eq!(decoded, vec!["x", "y", "<eos>", "z", "<eod>"]);
    }

    #[test]
    fn encode_never_exceeds_vocab_size() {
        let p = pair(&[&["a", "b", "q", "r", "s"]], &["t", "u"]);
        let v = Vocabulary::build(std::slice::from_ref(&p), 6).unwrap();
        let e = encode(&p, &v);
        assert!(e.source.iter().chain(&e.target).all(|&id| (id as usize) < v.len()));
    }

    #[test]
    fn char_mode_splits_tokens() {
        let p = pair(&[&["ab", "c"]], &["de"]);
        let c = p.to_char_mode();
        assert_eq!(c.sentences, vec![vec!["a", "b", "c"]]);
        assert_eq!(c.summary, vec!["d", "e"]);
    }

    #[test]
    fn aligned_tokens_match_encoded_positions() {
        let p = pair(&[&["a", "b"], &["c"]], &[]);
        let v = vocab_for(&[pair(&[&["a", "b"], &["c"]], &["a"])]);
        let aligned = aligned_source_tokens(&p);
        let encoded = encode(&p, &v);
        assert_eq!(aligned.len(), encoded.source.len());
        assert_eq!(aligned, vec!["a", "b", "<eos>", "c", "<eod>"]);
    }

    #[test]
    fn single_example_batch_has_no_padding() {
        let pairs = vec![EncodedPair { source: vec![4, 5, EOD], target: vec![4, EOD] }];
        let batches = make_batches(&pairs, 1, 7);
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].source[0], vec![4, 5, EOD]);
        assert!(batches[0].source_mask[0].iter().all(|&m| m));
    }

    #[test]
    fn batches_pad_to_batch_max_length() {
        let mk = |n: usize| EncodedPair { source: vec![4; n], target: vec![4, EOD] };
        let pairs = vec![mk(5), mk(2), mk(9)];
        let batches = make_batches(&pairs, 2, 0);
        assert_eq!(batches.len(), 2);
        for b in &batches {
            let width = *b.source_lens.iter().max().unwrap();
            for (i, row) in b.source.iter().enumerate() {
                assert_eq!(row.len(), width);
                for k in b.source_lens[i]..width {
                    assert_eq!(row[k], PAD);
                    assert!(!b.source_mask[i][k]);
                }
            }
        }
    }

    #[test]
    fn batching_is_deterministic_for_fixed_seed() {
        let pairs: Vec<EncodedPair> = (0..37)
            .map(|i| EncodedPair { source: vec![4; 1 + (i * 7) % 13], target: vec![4, EOD] })
            .collect();
        let a = make_batches(&pairs, 4, 99);
        let b = make_batches(&pairs, 4, 99);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.source, y.source);
            assert_eq!(x.target, y.target);
        }
        let c = make_batches(&pairs, 4, 100);
        assert!(a.iter().zip(&c).any(|(x, y)| x.source != y.source));
    }

    #[test]
    fn batches_preserve_the_example_multiset() {
        let pairs: Vec<EncodedPair> = (0..23)
            .map(|i| EncodedPair {
                source: vec![4 + i as u32; 1 + (i * 3) % 7],
                target: vec![4 + i as u32, EOD],
            })
            .collect();
        let batches = make_batches(&pairs, 5, 3);
        let mut seen: Vec<Vec<u32>> = batches
            .iter()
            .flat_map(|b| (0..b.len()).map(|i| b.example(i).0.to_vec()))
            .collect();
        let mut expect: Vec<Vec<u32>> = pairs.iter().map(|p| p.source.clone()).collect();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect);
    }

    #[test]
    fn masks_are_true_exactly_on_real_tokens() {
        let pairs = vec![
            EncodedPair { source: vec![4, 5], target: vec![6, EOD] },
            EncodedPair { source: vec![4, 5, 6, 7], target: vec![EOD] },
        ];
        let batches = make_batches(&pairs, 2, 1);
        let b = &batches[0];
        for i in 0..b.len() {
            for (k, &m) in b.source_mask[i].iter().enumerate() {
                assert_eq!(m, k < b.source_lens[i]);
            }
            for (k, &m) in b.target_mask[i].iter().enumerate() {
                assert_eq!(m, k < b.target_lens[i]);
            }
        }
    }
}
