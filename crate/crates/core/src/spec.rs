//! Trained tokenizer descriptions: validation, decoding, encoding dispatch and the
//! JSON spec file.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::vocab::{Alphabet, Token, TokenId, TokenSequence, Vocabulary};
use crate::{bpe, pretok, unigram, wordpiece};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Bpe,
    #[serde(rename = "wordpiece")]
    WordPiece,
    Unigram,
}

impl std::fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TokenizerKind::Bpe => "bpe",
            TokenizerKind::WordPiece => "wordpiece",
            TokenizerKind::Unigram => "unigram",
        })
    }
}

impl std::str::FromStr for TokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpe" => Ok(TokenizerKind::Bpe),
            "wordpiece" => Ok(TokenizerKind::WordPiece),
            "unigram" => Ok(TokenizerKind::Unigram),
            other => Err(Error::Validation(format!("unknown tokenizer kind {other:?}"))),
        }
    }
}

/// One BPE merge rule: `left | right` is rewritten to `merged`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Merge {
    pub left: TokenId,
    pub right: TokenId,
    pub merged: TokenId,
}

/// A trained tokenizer: kind, alphabet, vocabulary and the kind-specific artifacts
/// (ordered merge rules for BPE, probability scores for Unigram).
#[derive(Debug, Clone)]
pub struct TokenizerSpec {
    kind: TokenizerKind,
    alphabet: Alphabet,
    vocab: Vocabulary,
    merges: Vec<Merge>,
    scores: Vec<f64>,
    uses_pretokenizer: bool,
    merge_ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
    log_scores: Vec<f64>,
}

impl PartialEq for TokenizerSpec {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.alphabet == other.alphabet
            && self.vocab == other.vocab
            && self.merges == other.merges
            && self.scores.len() == other.scores.len()
            && self
                .scores
                .iter()
                .zip(&other.scores)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.uses_pretokenizer == other.uses_pretokenizer
    }
}

impl TokenizerSpec {
    /// Validates kind-specific artifacts and builds lookup tables.
    ///
    /// `merges` must be present exactly for BPE and `scores` (one per token, indexed by
    /// id) exactly for Unigram.
    pub fn new(
        kind: TokenizerKind,
        alphabet: Alphabet,
        vocab: Vocabulary,
        merges: Option<Vec<Merge>>,
        scores: Option<Vec<f64>>,
        uses_pretokenizer: bool,
    ) -> Result<Self> {
        match (kind, merges.is_some(), scores.is_some()) {
            (TokenizerKind::Bpe, true, false)
            | (TokenizerKind::WordPiece, false, false)
            | (TokenizerKind::Unigram, false, true) => {}
            (_, true, _) => {
                return Err(Error::Validation(format!(
                    "merges are only valid for bpe, not {kind}"
                )))
            }
            (_, _, true) => {
                return Err(Error::Validation(format!(
                    "scores are only valid for unigram, not {kind}"
                )))
            }
            (TokenizerKind::Bpe, false, _) => {
                return Err(Error::Validation("bpe spec requires merges".into()))
            }
            (TokenizerKind::Unigram, _, false) => {
                return Err(Error::Validation("unigram spec requires scores".into()))
            }
        }
        let merges = merges.unwrap_or_default();
        let scores = scores.unwrap_or_default();

        for &c in alphabet.chars() {
            let mut buf = [0u8; 4];
            let s = c.encode_utf8(&mut buf);
            if vocab.lookup(s, false).is_none() && vocab.lookup(s, true).is_none() {
                return Err(Error::Validation(format!(
                    "alphabet character {c:?} has no single-character token"
                )));
            }
        }
        for token in vocab.tokens() {
            if token.continuation && kind != TokenizerKind::WordPiece {
                return Err(Error::Validation(format!(
                    "token {} carries a continuation marker in a {kind} spec",
                    token.id
                )));
            }
            if let Some(c) = token.surface.chars().find(|&c| !alphabet.contains(c)) {
                return Err(Error::Validation(format!(
                    "token {} uses character {c:?} outside the alphabet",
                    token.id
                )));
            }
        }
        if kind != TokenizerKind::Bpe && !vocab.duplicate_surfaces().is_empty() {
            return Err(Error::Validation(format!(
                "duplicate token surfaces in a {kind} spec: {:?}",
                vocab.duplicate_surfaces()
            )));
        }

        let mut merge_ranks = HashMap::with_capacity(merges.len());
        let mut seen_merged = std::collections::HashSet::new();
        for (rank, m) in merges.iter().enumerate() {
            let (l, r, out) = (vocab.token(m.left)?, vocab.token(m.right)?, vocab.token(m.merged)?);
            if out.surface.len() != l.surface.len() + r.surface.len()
                || !out.surface.starts_with(&l.surface)
                || !out.surface.ends_with(&r.surface)
            {
                return Err(Error::Validation(format!(
                    "merge {rank} ({}, {}) -> {} does not concatenate surfaces",
                    m.left, m.right, m.merged
                )));
            }
            if !seen_merged.insert(m.merged) {
                return Err(Error::Validation(format!(
                    "token {} is produced by more than one merge",
                    m.merged
                )));
            }
            if merge_ranks.insert((m.left, m.right), (rank, m.merged)).is_some() {
                return Err(Error::Validation(format!(
                    "pair ({}, {}) has more than one merge rule",
                    m.left, m.right
                )));
            }
        }

        if kind == TokenizerKind::Unigram {
            if scores.len() != vocab.len() {
                return Err(Error::Validation(format!(
                    "expected {} unigram scores, found {}",
                    vocab.len(),
                    scores.len()
                )));
            }
            if let Some((id, s)) = scores.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
                return Err(Error::Validation(format!(
                    "unigram score for token {id} must be positive and finite, got {s}"
                )));
            }
        }
        let log_scores = scores.iter().map(|s| s.ln()).collect();

        Ok(Self {
            kind,
            alphabet,
            vocab,
            merges,
            scores,
            uses_pretokenizer,
            merge_ranks,
            log_scores,
        })
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Merge rules in learned order (BPE only; empty otherwise).
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Unigram probability scores indexed by token id (empty for other kinds).
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    pub fn uses_pretokenizer(&self) -> bool {
        self.uses_pretokenizer
    }

    /// Rank and output of the merge rule for `(left, right)`, if any.
    pub fn merge_rule(&self, left: TokenId, right: TokenId) -> Option<(usize, TokenId)> {
        self.merge_ranks.get(&(left, right)).copied()
    }

    /// Same spec with the pretokenizer flag replaced.
    pub fn with_pretokenizer(mut self, uses_pretokenizer: bool) -> Self {
        self.uses_pretokenizer = uses_pretokenizer;
        self
    }

    /// Non-fatal findings, currently BPE tokens that share a surface.
    pub fn warnings(&self) -> Vec<String> {
        self.vocab
            .duplicate_surfaces()
            .into_iter()
            .map(|ids| {
                let surface = &self.vocab.tokens()[ids[0] as usize].surface;
                format!("tokens {ids:?} share the surface {surface:?}")
            })
            .collect()
    }

    pub fn validate_sequence(&self, seq: &[TokenId]) -> Result<()> {
        match seq.iter().find(|&&id| !self.vocab.contains_id(id)) {
            Some(&id) => Err(Error::InvalidSequence { id }),
            None => Ok(()),
        }
    }

    /// Concatenates token surfaces. Continuation markers are never part of a surface.
    pub fn decode(&self, seq: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in seq {
            out.push_str(&self.vocab.token(id)?.surface);
        }
        Ok(out)
    }

    /// Decodes and reports each token's `[start, end)` character span.
    pub fn decode_with_offsets(&self, seq: &[TokenId]) -> Result<(String, Vec<(usize, usize)>)> {
        let mut out = String::new();
        let mut offsets = Vec::with_capacity(seq.len());
        let mut pos = 0;
        for &id in seq {
            let token = self.vocab.token(id)?;
            out.push_str(&token.surface);
            let end = pos + self.vocab.char_len(id);
            offsets.push((pos, end));
            pos = end;
        }
        Ok((out, offsets))
    }

    /// The canonical tokenization of `text`, pretokenizing first when the spec says so.
    pub fn encode(&self, text: &str) -> Result<TokenSequence> {
        if self.uses_pretokenizer {
            pretok::encode_pretokenized(self, text)
        } else {
            self.encode_segment(text)
        }
    }

    /// Encodes `text` as a single segment, ignoring the pretokenizer flag.
    pub fn encode_segment(&self, text: &str) -> Result<TokenSequence> {
        match self.kind {
            TokenizerKind::Bpe => bpe::encode_bpe(self, text),
            TokenizerKind::WordPiece => wordpiece::encode_wordpiece(self, text),
            TokenizerKind::Unigram => unigram::encode_unigram(self, text),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SpecFile {
            kind: self.kind,
            alphabet: self.alphabet.chars().iter().map(|c| c.to_string()).collect(),
            tokens: self
                .vocab
                .tokens()
                .iter()
                .map(|t| TokenEntry {
                    id: t.id,
                    surface: t.surface.clone(),
                    continuation: t.continuation,
                })
                .collect(),
            merges: (self.kind == TokenizerKind::Bpe)
                .then(|| self.merges.iter().map(|m| [m.left, m.right, m.merged]).collect()),
            scores: (self.kind == TokenizerKind::Unigram).then(|| {
                self.scores
                    .iter()
                    .enumerate()
                    .map(|(id, &s)| (id as TokenId, s))
                    .collect()
            }),
            pretokenizer: self.uses_pretokenizer,
        };
        let mut json = serde_json::to_string_pretty(&file)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("<document>", e))?;
        let Value::Object(mut obj) = value else {
            return Err(Error::parse("<document>", "expected a JSON object"));
        };
        let kind: TokenizerKind = take_field(&mut obj, "kind")?;
        let alphabet: Vec<String> = take_field(&mut obj, "alphabet")?;
        let tokens: Vec<TokenEntry> = take_field(&mut obj, "tokens")?;
        let merges: Option<Vec<[TokenId; 3]>> = take_optional(&mut obj, "merges")?;
        let scores: Option<BTreeMap<TokenId, f64>> = take_optional(&mut obj, "scores")?;
        let pretokenizer: bool = take_field(&mut obj, "pretokenizer")?;
        if let Some(unknown) = obj.keys().next() {
            return Err(Error::parse(unknown.clone(), "unknown field"));
        }

        let chars = alphabet
            .iter()
            .map(|s| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(c),
                    _ => Err(Error::parse("alphabet", format!("{s:?} is not a single character"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let alphabet = Alphabet::new(chars)?;
        let vocab = Vocabulary::new(
            tokens
                .into_iter()
                .map(|t| Token {
                    id: t.id,
                    surface: t.surface,
                    continuation: t.continuation,
                })
                .collect(),
        )?;
        let merges = merges.map(|ms| {
            ms.into_iter()
                .map(|[left, right, merged]| Merge { left, right, merged })
                .collect()
        });
        let scores = match scores {
            None => None,
            Some(map) => {
                if map.keys().copied().ne(0..map.len() as TokenId) {
                    return Err(Error::parse("scores", "keys must cover every token id exactly once"));
                }
                Some(map.into_values().collect())
            }
        };
        Self::new(kind, alphabet, vocab, merges, scores, pretokenizer)
    }
}

/// Writes `spec` as a JSON document.
pub fn save_spec(spec: &TokenizerSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, spec.to_json()?)?;
    Ok(())
}

/// Reads and validates a JSON spec document.
pub fn load_spec(path: impl AsRef<Path>) -> Result<TokenizerSpec> {
    TokenizerSpec::from_json(&fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    kind: TokenizerKind,
    alphabet: Vec<String>,
    tokens: Vec<TokenEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    merges: Option<Vec<[TokenId; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<BTreeMap<TokenId, f64>>,
    pretokenizer: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenEntry {
    id: TokenId,
    surface: String,
    continuation: bool,
}

fn take_field<T: serde::de::DeserializeOwned>(obj: &mut Map<String, Value>, field: &str) -> Result<T> {
    let value = obj
        .remove(field)
        .ok_or_else(|| Error::parse(field, "missing"))?;
    serde_json::from_value(value).map_err(|e| Error::parse(field, e))
}

fn take_optional<T: serde::de::DeserializeOwned>(
    obj: &mut Map<String, Value>,
    field: &str,
) -> Result<Option<T>> {
    match obj.remove(field) {
        None | Some(Value::Null) => Ok(None),
        Some(value) => serde_json::from_value(value)
            .map(Some)
            .map_err(|e| Error::parse(field, e)),
    }
}
