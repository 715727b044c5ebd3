//! Byte-pair-encoding training and encoding.
//!
//! Training starts from single-character tokens and repeatedly merges the most
//! frequent adjacent pair, recording an ordered list of merge rules. Encoding
//! replays those rules in learned order; each rule rewrites its occurrences left to
//! right until no rule applies. Ties during training go to the smallest
//! `(left id, right id)` pair; training stops early once no adjacent pair remains.

use std::collections::HashMap;

use crate::corpus::{collect_words, WordCounts};
use crate::error::{Error, Result};
use crate::spec::{Merge, TokenizerKind, TokenizerSpec};
use crate::vocab::{Alphabet, TokenId, TokenSequence, Vocabulary};

/// A single application of a merge rule while encoding a string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeEvent {
    /// Position of the applied rule in the learned merge list.
    pub rule_index: usize,
    pub left: TokenId,
    pub right: TokenId,
    pub merged: TokenId,
    /// Character span `[start, end)` covered by the merged token.
    pub span: (usize, usize),
}

/// Learns up to `num_merges` merge rules from `corpus`.
///
/// With `pretokenize`, pairs are only counted inside pretokenizer segments and the
/// resulting spec encodes segment by segment.
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    num_merges: usize,
    pretokenize: bool,
) -> Result<TokenizerSpec> {
    if corpus.is_empty() || corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let alphabet = Alphabet::from_texts(corpus)?;
    let mut surfaces: Vec<String> = alphabet.chars().iter().map(|c| c.to_string()).collect();
    let char_ids: HashMap<char, TokenId> = alphabet
        .chars()
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as TokenId))
        .collect();

    let WordCounts { words, counts } = collect_words(corpus, pretokenize);
    let mut states: Vec<Vec<TokenId>> = words
        .iter()
        .map(|w| w.chars().map(|c| char_ids[&c]).collect())
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pair_counts: HashMap<(TokenId, TokenId), u64> = HashMap::new();
        for (state, &count) in states.iter().zip(&counts) {
            for pair in state.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_default() += count;
            }
        }
        // Highest count first, then the smallest (left, right) pair.
        let best = pair_counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
        let Some(((left, right), _)) = best else { break };

        let merged = surfaces.len() as TokenId;
        let surface = format!("{}{}", surfaces[left as usize], surfaces[right as usize]);
        surfaces.push(surface);
        for state in &mut states {
            apply_merge(state, left, right, merged);
        }
        merges.push(Merge { left, right, merged });
    }

    let vocab = Vocabulary::from_surfaces(surfaces.into_iter().map(|s| (s, false)))?;
    TokenizerSpec::new(
        TokenizerKind::Bpe,
        alphabet,
        vocab,
        Some(merges),
        None,
        pretokenize,
    )
}

/// Replaces every occurrence of `left | right` with `merged`, scanning left to right.
fn apply_merge(seq: &mut Vec<TokenId>, left: TokenId, right: TokenId, merged: TokenId) {
    if seq.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

/// The canonical BPE tokenization of `text` (no pretokenization).
pub fn encode_bpe(spec: &TokenizerSpec, text: &str) -> Result<TokenSequence> {
    Ok(encode_bpe_traced(spec, text)?.0)
}

/// Encodes `text` and reports every merge application in order.
pub fn encode_bpe_traced(spec: &TokenizerSpec, text: &str) -> Result<(TokenSequence, Vec<MergeEvent>)> {
    let mut seq = initial_sequence(spec, text)?;
    let mut spans: Vec<(usize, usize)> = (0..seq.len()).map(|i| (i, i + 1)).collect();
    let mut events = Vec::new();

    // Rules fire in learned order. A rule can never become applicable again once a
    // later rule has fired, so it suffices to repeatedly pick the lowest-ranked rule
    // present and apply it across the whole sequence.
    loop {
        let next_rule = seq
            .windows(2)
            .filter_map(|p| spec.merge_rule(p[0], p[1]))
            .min_by_key(|&(rank, _)| rank);
        let Some((rank, merged)) = next_rule else { break };
        let Merge { left, right, .. } = spec.merges()[rank];

        let mut out = Vec::with_capacity(seq.len());
        let mut out_spans = Vec::with_capacity(seq.len());
        let mut i = 0;
        while i < seq.len() {
            if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
                let span = (spans[i].0, spans[i + 1].1);
                events.push(MergeEvent {
                    rule_index: rank,
                    left,
                    right,
                    merged,
                    span,
                });
                out.push(merged);
                out_spans.push(span);
                i += 2;
            } else {
                out.push(seq[i]);
                out_spans.push(spans[i]);
                i += 1;
            }
        }
        seq = out;
        spans = out_spans;
    }
    Ok((seq, events))
}

/// Single-character token ids for `text`, failing on characters outside the alphabet.
pub(crate) fn initial_sequence(spec: &TokenizerSpec, text: &str) -> Result<Vec<TokenId>> {
    let mut buf = [0u8; 4];
    text.chars()
        .enumerate()
        .map(|(position, ch)| {
            if !spec.alphabet().contains(ch) {
                return Err(Error::Encoding { ch, position });
            }
            spec.vocab()
                .lookup(ch.encode_utf8(&mut buf), false)
                .ok_or(Error::Encoding { ch, position })
        })
        .collect()
}

/// Whether the two-token sequence `last | next` is its own BPE encoding.
///
/// For a canonical sequence ending in `last`, appending `next` keeps it canonical
/// exactly when this holds, which makes it the per-step check for canonical sampling.
pub fn bpe_pair_canonical(spec: &TokenizerSpec, last: TokenId, next: TokenId) -> Result<bool> {
    let pair = [last, next];
    let text = spec.decode(&pair)?;
    Ok(encode_bpe(spec, &text)? == pair)
}
