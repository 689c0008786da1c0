//! Token↔id vocabulary with reserved ids and frequency truncation.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::DocumentPair;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
pub const EOD: u32 = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<eos>", "<eod>"];

/// Bijective token↔id map. Ids 0..3 are fixed to PAD/UNK/EOS/EOD; real
/// tokens occupy 4..K−1 in frequency order (ties by first occurrence).
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Rank tokens from documents and summaries combined and keep the
    /// `size_limit - 4` most frequent, after the 4 reserved slots.
    pub fn build<'a>(
        pairs: impl IntoIterator<Item = &'a DocumentPair>,
        size_limit: usize,
    ) -> Result<Vocabulary> {
        if size_limit < 5 {
            return Err(Error::usage(format!(
                "vocabulary size limit must be at least 5, got {size_limit}"
            )));
        }
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let mut seen = 0usize;
        let mut any = false;
        for pair in pairs {
            any = true;
            let tokens = pair.sentences.iter().flatten().chain(pair.summary.iter());
            for token in tokens {
                if RESERVED.contains(&token.as_str()) {
                    continue;
                }
                let entry = counts.entry(token.as_str()).or_insert_with(|| {
                    let first = seen;
                    seen += 1;
                    (0, first)
                });
                entry.0 += 1;
            }
        }
        if !any {
            return Err(Error::usage("cannot build a vocabulary from an empty corpus"));
        }
        let mut ranked: Vec<(&str, u64, usize)> =
            counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        ranked.truncate(size_limit - 4);

        let mut vocab = Vocabulary::reserved_only();
        for (token, _, _) in ranked {
            vocab.push(token.to_string());
        }
        Ok(vocab)
    }

    fn reserved_only() -> Vocabulary {
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for name in RESERVED {
            vocab.push(name.to_string());
        }
        vocab
    }

    fn push(&mut self, token: String) {
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
    }

    /// K, counting the reserved tokens.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// One token per line; the first four lines are the reserved header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for token in &self.id_to_token {
            out.push_str(token);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Vocabulary> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 4 {
            return Err(Error::format("vocabulary file is missing the reserved header"));
        }
        for (line, expect) in lines.iter().zip(RESERVED) {
            if *line != expect {
                return Err(Error::format(format!(
                    "vocabulary header line {line:?} does not match reserved token {expect:?}"
                )));
            }
        }
        let mut vocab = Vocabulary::reserved_only();
        for line in &lines[4..] {
            if line.is_empty() {
                return Err(Error::format("empty token line in vocabulary file"));
            }
            if vocab.contains(line) {
                return Err(Error::format(format!("duplicate token {line:?} in vocabulary file")));
            }
            vocab.push(line.to_string());
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path)?;
        Vocabulary::from_text(&text)
    }

    /// FNV-1a over the serialized file, used to pair checkpoints with the
    /// vocabulary they were trained against.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf29ce484222325;
        for byte in self.to_text().as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}
