//! WordPiece training and greedy longest-match encoding.
//!
//! Tokens inside a word carry the continuation flag. Training merges the adjacent
//! pair maximising `freq(pair) / (freq(left) * freq(right))` over the current
//! tokenization of the corpus. Only position 0 of an encoded string is word-initial;
//! splitting text into words is the pretokenizer's job.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use crate::corpus::{collect_words, WordCounts};
use crate::error::{Error, Result};
use crate::spec::{TokenizerKind, TokenizerSpec};
use crate::vocab::{Alphabet, TokenId, TokenSequence, Vocabulary};

/// Grows a WordPiece vocabulary to `target_vocab_size` tokens, or as far as merging
/// allows. The returned spec records the size actually reached.
pub fn train_wordpiece<S: AsRef<str>>(
    corpus: &[S],
    target_vocab_size: usize,
    pretokenize: bool,
) -> Result<TokenizerSpec> {
    if corpus.is_empty() || corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let alphabet = Alphabet::from_texts(corpus)?;
    let WordCounts { words, counts } = collect_words(corpus, pretokenize);

    let mut initial = BTreeSet::new();
    for word in &words {
        for (i, c) in word.chars().enumerate() {
            initial.insert((i > 0, c));
        }
    }
    if target_vocab_size < initial.len() {
        return Err(Error::Validation(format!(
            "target vocabulary size {target_vocab_size} is below the {} single-character tokens",
            initial.len()
        )));
    }

    let mut surfaces: Vec<(String, bool)> = initial.iter().map(|&(cont, c)| (c.to_string(), cont)).collect();
    let mut lookup: HashMap<(String, bool), TokenId> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as TokenId))
        .collect();
    let mut states: Vec<Vec<TokenId>> = words
        .iter()
        .map(|w| {
            w.chars()
                .enumerate()
                .map(|(i, c)| lookup[&(c.to_string(), i > 0)])
                .collect()
        })
        .collect();

    while surfaces.len() < target_vocab_size {
        let mut token_freq: HashMap<TokenId, u64> = HashMap::new();
        let mut pair_freq: HashMap<(TokenId, TokenId), u64> = HashMap::new();
        for (state, &count) in states.iter().zip(&counts) {
            for &t in state {
                *token_freq.entry(t).or_default() += count;
            }
            for p in state.windows(2) {
                *pair_freq.entry((p[0], p[1])).or_default() += count;
            }
        }
        let best = pair_freq
            .iter()
            .map(|(&pair, &freq)| PairScore {
                pair,
                freq,
                denom: token_freq[&pair.0] * token_freq[&pair.1],
            })
            .max_by(PairScore::cmp);
        let Some(PairScore { pair: (left, right), .. }) = best else {
            break;
        };

        let (left_surface, left_cont) = surfaces[left as usize].clone();
        let key = (format!("{left_surface}{}", surfaces[right as usize].0), left_cont);
        // A pair can concatenate to a surface the vocabulary already holds; the
        // existing token is reused so that surfaces stay unique.
        let merged = match lookup.get(&key) {
            Some(&id) => id,
            None => {
                let id = surfaces.len() as TokenId;
                surfaces.push(key.clone());
                lookup.insert(key, id);
                id
            }
        };
        for state in &mut states {
            merge_pair(state, left, right, merged);
        }
    }

    let vocab = Vocabulary::from_surfaces(surfaces)?;
    TokenizerSpec::new(TokenizerKind::WordPiece, alphabet, vocab, None, None, pretokenize)
}

/// Candidate merge with its exact score `freq / denom`.
struct PairScore {
    pair: (TokenId, TokenId),
    freq: u64,
    denom: u64,
}

impl PairScore {
    /// Higher score wins, then higher pair frequency, then the smaller id pair.
    fn cmp(a: &Self, b: &Self) -> Ordering {
        let lhs = a.freq as u128 * b.denom as u128;
        let rhs = b.freq as u128 * a.denom as u128;
        lhs.cmp(&rhs)
            .then(a.freq.cmp(&b.freq))
            .then_with(|| b.pair.cmp(&a.pair))
    }
}

fn merge_pair(seq: &mut Vec<TokenId>, left: TokenId, right: TokenId, merged: TokenId) {
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

/// Greedy longest-match encoding of a single word.
pub fn encode_wordpiece(spec: &TokenizerSpec, text: &str) -> Result<TokenSequence> {
    let vocab = spec.vocab();
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()))
        .collect();
    let n = bounds.len() - 1;
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < n {
        let continuation = i > 0;
        let longest = vocab.max_token_chars().min(n - i);
        for len in (1..=longest).rev() {
            if let Some(id) = vocab.lookup(&text[bounds[i]..bounds[i + len]], continuation) {
                out.push(id);
                i += len;
                continue 'outer;
            }
        }
        let ch = text[bounds[i]..].chars().next().unwrap_or_default();
        return Err(Error::Encoding { ch, position: i });
    }
    Ok(out)
}
