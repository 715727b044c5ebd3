#![allow(dead_code)]

pub mod oracles;

use std::collections::HashMap;

use canontok::bpe::train_bpe;
use canontok::unigram::train_unigram;
use canontok::wordpiece::train_wordpiece;
use canontok::{TokenId, TokenizerKind, TokenizerSpec};
use rand::seq::SliceRandom;
use rand::Rng;

pub const KINDS: [TokenizerKind; 3] = [TokenizerKind::Bpe, TokenizerKind::WordPiece, TokenizerKind::Unigram];

pub fn random_string<R: Rng>(rng: &mut R, alphabet: &[char], min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Lines over `alphabet` that together use every character.
pub fn random_corpus<R: Rng>(rng: &mut R, alphabet: &[char], lines: usize, max_len: usize) -> Vec<String> {
    let mut corpus: Vec<String> = (0..lines).map(|_| random_string(rng, alphabet, 1, max_len)).collect();
    corpus.push(alphabet.iter().collect());
    corpus
}

/// A small trained tokenizer of `kind` with at most `max_vocab` tokens.
pub fn random_spec<R: Rng>(rng: &mut R, kind: TokenizerKind, alphabet: &[char], pretokenize: bool, max_vocab: usize) -> TokenizerSpec {
    loop {
        let lines = rng.gen_range(3..10);
        let corpus = random_corpus(rng, alphabet, lines, 8);
        let result = match kind {
            TokenizerKind::Bpe => {
                let merges = rng.gen_range(0..=max_vocab.saturating_sub(alphabet.len()));
                train_bpe(&corpus, merges, pretokenize)
            }
            TokenizerKind::WordPiece => {
                let target = rng.gen_range(2 * alphabet.len()..=max_vocab.max(2 * alphabet.len()));
                train_wordpiece(&corpus, target, pretokenize)
            }
            TokenizerKind::Unigram => {
                let target = rng.gen_range(alphabet.len()..=max_vocab);
                train_unigram(&corpus, target, rng.gen_range(0.1..0.6), pretokenize)
            }
        };
        match result {
            Ok(spec) if spec.vocab_size() <= max_vocab => return spec,
            // A wordpiece corpus can need more initial tokens than allowed; draw again.
            _ => continue,
        }
    }
}

/// Canonicity decided by re-encoding, with encodings memoized per string.
pub struct CanonicityMemo<'a> {
    spec: &'a TokenizerSpec,
    encodings: HashMap<String, Option<Vec<TokenId>>>,
}

impl<'a> CanonicityMemo<'a> {
    pub fn new(spec: &'a TokenizerSpec) -> Self {
        Self {
            spec,
            encodings: HashMap::new(),
        }
    }

    pub fn is_canonical_text(&mut self, text: &str, seq: &[TokenId]) -> bool {
        if let Some(e) = self.encodings.get(text) {
            return e.as_deref() == Some(seq);
        }
        let e = self.spec.encode(text).ok();
        let ok = e.as_deref() == Some(seq);
        self.encodings.insert(text.to_owned(), e);
        ok
    }
}

/// Walks every token sequence of length 1..=`max_len` and returns the first
/// canonical sequence whose one-shorter prefix is not canonical.
pub fn find_recovery(spec: &TokenizerSpec, max_len: usize) -> Option<Vec<TokenId>> {
    let surfaces: Vec<&str> = spec.vocab().tokens().iter().map(|t| t.surface.as_str()).collect();
    let mut memo = CanonicityMemo::new(spec);
    let mut seq = Vec::new();
    let mut text = String::new();
    fn walk(
        surfaces: &[&str],
        memo: &mut CanonicityMemo,
        seq: &mut Vec<TokenId>,
        text: &mut String,
        prefix_canonical: bool,
        max_len: usize,
    ) -> Option<Vec<TokenId>> {
        if seq.len() == max_len {
            return None;
        }
        for (id, s) in surfaces.iter().enumerate() {
            let mark = text.len();
            seq.push(id as TokenId);
            text.push_str(s);
            let canonical = memo.is_canonical_text(text, seq);
            if canonical && !prefix_canonical {
                return Some(seq.clone());
            }
            if let Some(v) = walk(surfaces, memo, seq, text, canonical, max_len) {
                return Some(v);
            }
            seq.pop();
            text.truncate(mark);
        }
        None
    }
    walk(&surfaces, &mut memo, &mut seq, &mut text, true, max_len)
}
