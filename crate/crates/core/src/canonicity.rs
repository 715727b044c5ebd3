//! Canonicity predicates and a brute-force tokenization enumerator.
//!
//! A sequence is canonical when it is exactly what the encoder produces for its own
//! decoded string. BPE, WordPiece and Unigram are non-recovering: once a sequence is
//! non-canonical, no extension is canonical again. Generation therefore only has to
//! check each newly appended token.

use crate::bpe::bpe_pair_canonical;
use crate::error::{Error, Result};
use crate::pretok::segment_spans;
use crate::spec::{TokenizerKind, TokenizerSpec};
use crate::unigram::TokenLattice;
use crate::vocab::{TokenId, TokenSequence};

/// Longest string [`enumerate_tokenizations`] accepts.
pub const ENUMERATION_MAX_CHARS: usize = 12;

/// `encode(decode(seq)) == seq`. The empty sequence is canonical.
pub fn is_canonical(spec: &TokenizerSpec, seq: &[TokenId]) -> Result<bool> {
    if seq.is_empty() {
        return Ok(true);
    }
    let text = spec.decode(seq)?;
    encodes_to(spec, &text, seq)
}

/// A decoded string the encoder cannot handle (greedy wordpiece can get stuck) has no
/// canonical tokenization, so nothing decoding to it is canonical.
fn encodes_to(spec: &TokenizerSpec, text: &str, seq: &[TokenId]) -> Result<bool> {
    match spec.encode(text) {
        Ok(encoded) => Ok(encoded == seq),
        Err(Error::Encoding { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Whether `seq | next` is canonical, assuming `seq` already is.
///
/// Plain BPE only needs the last token and `next`. Pretokenized specs re-encode from
/// the start of the final segment of `seq`; other kinds re-encode the whole sequence.
pub fn extension_is_canonical(spec: &TokenizerSpec, seq: &[TokenId], next: TokenId) -> Result<bool> {
    spec.validate_sequence(&[next])?;
    let Some(&last) = seq.last() else {
        return is_canonical(spec, &[next]);
    };
    if spec.uses_pretokenizer() {
        return pretokenized_extension(spec, seq, next);
    }
    if spec.kind() == TokenizerKind::Bpe {
        return bpe_pair_canonical(spec, last, next);
    }
    let mut extended = Vec::with_capacity(seq.len() + 1);
    extended.extend_from_slice(seq);
    extended.push(next);
    is_canonical(spec, &extended)
}

/// Segments before the last one are unaffected by appending text, because the
/// pretokenizer is closed under prefix and splits greedily.
fn pretokenized_extension(spec: &TokenizerSpec, seq: &[TokenId], next: TokenId) -> Result<bool> {
    let (text, offsets) = spec.decode_with_offsets(seq)?;
    let last_segment_start = segment_spans(&text).last().map_or(0, |s| s.0);
    let Some(first_token) = offsets.iter().position(|o| o.0 == last_segment_start) else {
        // A token straddles the boundary, so `seq` was not canonical to begin with.
        let mut extended = seq.to_vec();
        extended.push(next);
        return is_canonical(spec, &extended);
    };
    let mut tail: Vec<TokenId> = seq[first_token..].to_vec();
    tail.push(next);
    let tail_text = spec.decode(&tail)?;
    encodes_to(spec, &tail_text, &tail)
}

/// All tokenizations of `text`, in lexicographic id order, stopping after `max_count`.
///
/// Refuses strings longer than [`ENUMERATION_MAX_CHARS`], reporting the lattice's
/// path count as the size estimate.
pub fn enumerate_tokenizations(spec: &TokenizerSpec, text: &str, max_count: usize) -> Result<Vec<TokenSequence>> {
    let chars: Vec<char> = text.chars().collect();
    // Every token (continuation or not) is a candidate at every position, because
    // decoding ignores the marker.
    let mut starts: Vec<Vec<(TokenId, usize)>> = vec![Vec::new(); chars.len()];
    for token in spec.vocab().tokens() {
        let surface: Vec<char> = token.surface.chars().collect();
        for (i, slot) in starts.iter_mut().enumerate() {
            if chars[i..].starts_with(&surface) {
                slot.push((token.id, surface.len()));
            }
        }
    }
    if chars.len() > ENUMERATION_MAX_CHARS {
        let estimate = count_all_paths(&starts, chars.len());
        return Err(Error::TooLong {
            len: chars.len(),
            limit: ENUMERATION_MAX_CHARS,
            estimate,
        });
    }

    let mut out = Vec::new();
    let mut current = Vec::new();
    fn walk(
        starts: &[Vec<(TokenId, usize)>],
        pos: usize,
        current: &mut Vec<TokenId>,
        out: &mut Vec<TokenSequence>,
        max_count: usize,
    ) {
        if out.len() >= max_count {
            return;
        }
        if pos == starts.len() {
            out.push(current.clone());
            return;
        }
        for &(id, len) in &starts[pos] {
            current.push(id);
            walk(starts, pos + len, current, out, max_count);
            current.pop();
        }
    }
    if !chars.is_empty() {
        walk(&starts, 0, &mut current, &mut out, max_count);
    }
    Ok(out)
}

fn count_all_paths(starts: &[Vec<(TokenId, usize)>], len: usize) -> u128 {
    let mut suffix = vec![0u128; len + 1];
    suffix[len] = 1;
    for i in (0..len).rev() {
        suffix[i] = starts[i]
            .iter()
            .fold(0u128, |acc, &(_, l)| acc.saturating_add(suffix[i + l]));
    }
    suffix[0]
}

/// Number of tokenizations of `text` using word-initial tokens only.
pub fn count_tokenizations(spec: &TokenizerSpec, text: &str) -> u128 {
    TokenLattice::build(spec.vocab(), text).total_paths()
}
