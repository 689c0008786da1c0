//! End-to-end summarization of documents with a trained model: encode,
//! beam-search, strip the terminator, replace UNKs from the source.

use crate::corpus::{aligned_source_tokens, encode, DocumentPair};
use crate::error::Result;
use crate::model::Model;
use crate::search::{beam_search, finalize_summary, BeamConfig};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone)]
pub struct Summary {
    pub tokens: Vec<String>,
    /// Cumulative beam score of the winning hypothesis.
    pub score: f64,
    /// True when the search hit the length budget without emitting EOD.
    pub truncated: bool,
}

pub fn summarize_pair(
    model: &Model,
    vocab: &Vocabulary,
    pair: &DocumentPair,
    beam: &BeamConfig,
) -> Result<Summary> {
    let encoded = encode(pair, vocab);
    let mut session = model.decode_session(&encoded.source);
    let result = beam_search(&mut session, beam)?;
    let best = &result.hypotheses[0];
    let source_tokens = aligned_source_tokens(pair);
    Ok(Summary {
        tokens: finalize_summary(best, &source_tokens, vocab),
        score: best.score(),
        truncated: result.truncated,
    })
}

pub fn summarize_set(
    model: &Model,
    vocab: &Vocabulary,
    pairs: &[DocumentPair],
    beam: &BeamConfig,
) -> Result<Vec<Summary>> {
    pairs
        .iter()
        .map(|pair| summarize_pair(model, vocab, pair, beam))
        .collect()
}
