// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level BPE tokenizer compatible with the published GPT-2 vocabulary.
//!
//! Text is split with the GPT-2 pre-tokenization pattern
//!
//! ```text
//! 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
//! ```
//!
//! and each chunk's UTF-8 bytes are merged pairwise by rank. No Unicode
//! normalization is applied, so every input round-trips through
//! [`Tokenizer::decode`].

mod bpe;
pub mod bytes;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};

use self::bpe::MergeTable;

/// GPT-2 pre-tokenization pattern.
pub const SPLIT_PATTERN: &str =
    r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

const GPT2_VOCAB: &[u8] = include_bytes!("../../assets/gpt2/encoder.json");
const GPT2_MERGES: &[u8] = include_bytes!("../../assets/gpt2/vocab.bpe");

/// Index into the tokenizer vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("{source_name}: parse error at line {line}, column {column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{source_name}: integrity error: {message}")]
    Integrity { source_name: String, message: String },
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    OutOfRange { id: u32, vocab_size: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A named byte stream, e.g. a file path and its contents.
#[derive(Debug, Clone, Copy)]
pub struct Source<'a> {
    pub name: &'a str,
    pub bytes: &'a [u8],
}

impl<'a> Source<'a> {
    pub fn new(name: &'a str, bytes: &'a [u8]) -> Self {
        Source { name, bytes }
    }
}

/// Immutable byte-level BPE tokenizer.
pub struct Tokenizer {
    /// raw token bytes by id
    tokens: Vec<Vec<u8>>,
    /// id of each single-byte unit
    byte_ids: [u32; 256],
    ids_by_bytes: HashMap<Vec<u8>, u32>,
    merges: MergeTable,
    splitter: Regex,
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tokenizer")
            .field("vocab_size", &self.vocab_size())
            .field("merges", &self.merge_count())
            .finish()
    }
}

impl Tokenizer {
    /// The published GPT-2 tokenizer bundled with this crate.
    pub fn gpt2() -> Self {
        Self::load(
            Source::new("encoder.json", GPT2_VOCAB),
            Source::new("vocab.bpe", GPT2_MERGES),
        )
        .expect("bundled GPT-2 tokenizer files are well-formed")
    }

    pub fn from_files(vocab: &Path, merges: &Path) -> Result<Self, TokenizerError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|source| TokenizerError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let vocab_bytes = read(vocab)?;
        let merges_bytes = read(merges)?;
        let vocab_name = vocab.display().to_string();
        let merges_name = merges.display().to_string();
        Self::load(
            Source::new(&vocab_name, &vocab_bytes),
            Source::new(&merges_name, &merges_bytes),
        )
    }

    /// Builds a tokenizer from a vocabulary JSON map (symbol string to id)
    /// and a rank-ordered merges list (one `left right` pair per line,
    /// optional `#version` header).
    pub fn load(vocab: Source<'_>, merges: Source<'_>) -> Result<Self, TokenizerError> {
        let integrity = |name: &str, message: String| TokenizerError::Integrity {
            source_name: name.to_string(),
            message,
        };

        let map: HashMap<String, u32> =
            serde_json::from_slice(vocab.bytes).map_err(|e| TokenizerError::Parse {
                source_name: vocab.name.to_string(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;

        let mut slots: Vec<Option<Vec<u8>>> = vec![None; map.len()];
        let mut ids_by_bytes = HashMap::with_capacity(map.len());
        for (symbol, &id) in &map {
            let raw = symbols_to_bytes(symbol).ok_or_else(|| {
                integrity(
                    vocab.name,
                    format!("entry {symbol:?} uses a symbol outside the byte map"),
                )
            })?;
            let slot = slots.get_mut(id as usize).ok_or_else(|| {
                integrity(
                    vocab.name,
                    format!("id {id} for {symbol:?} is not below the vocabulary size {}", map.len()),
                )
            })?;
            if slot.is_some() {
                return Err(integrity(vocab.name, format!("id {id} assigned twice")));
            }
            if ids_by_bytes.insert(raw.clone(), id).is_some() {
                return Err(integrity(
                    vocab.name,
                    format!("entry {symbol:?} duplicates the bytes of another entry"),
                ));
            }
            *slot = Some(raw);
        }
        // ids are a permutation of 0..len once no slot is duplicated
        let tokens: Vec<Vec<u8>> = slots.into_iter().map(|s| s.unwrap_or_default()).collect();

        let mut byte_ids = [0u32; 256];
        for b in 0..=255u8 {
            byte_ids[b as usize] = *ids_by_bytes.get(&vec![b]).ok_or_else(|| {
                integrity(
                    vocab.name,
                    format!("no entry for the single byte 0x{b:02x} ({:?})", bytes::symbol_for(b)),
                )
            })?;
        }

        let text = std::str::from_utf8(merges.bytes).map_err(|e| {
            let line = merges.bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            TokenizerError::Parse {
                source_name: merges.name.to_string(),
                line,
                column: 0,
                message: "invalid UTF-8".to_string(),
            }
        })?;
        let mut table = MergeTable::default();
        let mut rank = 0u32;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if idx == 0 && line.starts_with("#version") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(TokenizerError::Parse {
                    source_name: merges.name.to_string(),
                    line: line_no,
                    column: 1,
                    message: format!("expected two space-separated symbols, got {line:?}"),
                });
            };
            if left.is_empty() || right.is_empty() {
                return Err(TokenizerError::Parse {
                    source_name: merges.name.to_string(),
                    line: line_no,
                    column: 1,
                    message: "empty merge symbol".to_string(),
                });
            }
            let lookup = |s: &str| -> Result<u32, TokenizerError> {
                let raw = symbols_to_bytes(s).ok_or_else(|| {
                    integrity(
                        merges.name,
                        format!("line {line_no}: {s:?} uses a symbol outside the byte map"),
                    )
                })?;
                ids_by_bytes.get(&raw).copied().ok_or_else(|| {
                    integrity(merges.name, format!("line {line_no}: {s:?} is not in the vocabulary"))
                })
            };
            let l = lookup(left)?;
            let r = lookup(right)?;
            let merged = lookup(&format!("{left}{right}"))?;
            table.insert(l, r, rank, merged);
            rank += 1;
        }

        let splitter = Regex::new(SPLIT_PATTERN).expect("split pattern compiles");
        Ok(Tokenizer {
            tokens,
            byte_ids,
            ids_by_bytes,
            merges: table,
            splitter,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    /// Id of the token whose raw bytes are exactly `bytes`.
    pub fn id_of(&self, bytes: &[u8]) -> Option<TokenId> {
        self.ids_by_bytes.get(bytes).copied().map(TokenId)
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut symbols = Vec::new();
        for piece in self.pre_tokenize(text) {
            symbols.clear();
            symbols.extend(piece.bytes().map(|b| self.byte_ids[b as usize]));
            self.merges.apply(&mut symbols);
            out.extend(symbols.iter().copied().map(TokenId));
        }
        out
    }

    /// Splits text into the chunks that BPE merges operate within.
    pub fn pre_tokenize<'t>(&self, text: &'t str) -> Vec<&'t str> {
        let mut pieces = Vec::new();
        for m in self.splitter.find_iter(text) {
            // the pattern has no catastrophic constructs; a backtrack-limit
            // error would indicate a bug, so fall back to the raw remainder
            match m {
                Ok(m) => pieces.push(m.as_str()),
                Err(_) => {
                    let consumed: usize = pieces.iter().map(|p| p.len()).sum();
                    pieces.push(&text[consumed..]);
                    break;
                }
            }
        }
        pieces
    }

    /// Raw bytes of a token sequence.
    pub fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            out.extend_from_slice(self.token_bytes(id)?);
        }
        Ok(out)
    }

    /// Decoded text; invalid UTF-8 runs become U+FFFD.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let raw = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(raw) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    pub fn token_bytes(&self, id: TokenId) -> Result<&[u8], TokenizerError> {
        self.tokens
            .get(id.index())
            .map(Vec::as_slice)
            .ok_or(TokenizerError::OutOfRange {
                id: id.0,
                vocab_size: self.vocab_size(),
            })
    }

    /// Human-readable label for one token: spaces shown as `␣`, control
    /// characters and stray bytes escaped.
    pub fn token_text(&self, id: TokenId) -> Result<String, TokenizerError> {
        Ok(display_bytes(self.token_bytes(id)?))
    }
}

fn symbols_to_bytes(s: &str) -> Option<Vec<u8>> {
    s.chars().map(bytes::byte_for).collect()
}

/// Display form used for token labels.
pub fn display_bytes(raw: &[u8]) -> String {
    let mut out = String::new();
    for chunk in raw.utf8_chunks() {
        for c in chunk.valid().chars() {
            match c {
                ' ' => out.push('␣'),
                '\n' => out.push_str("\\n"),
                '\t' => out.push_str("\\t"),
                '\r' => out.push_str("\\r"),
                c if c.is_control() => out.push_str(&c.escape_unicode().to_string()),
                c => out.push(c),
            }
        }
        for b in chunk.invalid() {
            out.push_str(&format!("\\x{b:02x}"));
        }
    }
    out
}
