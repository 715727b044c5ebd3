//! Unigram vocabulary pruning and Viterbi encoding over a tokenization lattice.
//!
//! Token scores are `r(t) = freq(t) / sum freq`, where `freq(t)` counts how often `t`
//! occurs across *all* tokenizations of the training words. The lattice computes those
//! counts exactly with forward/backward path counting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::corpus::{collect_words, WordCounts};
use crate::error::{Error, Result};
use crate::spec::{TokenizerKind, TokenizerSpec};
use crate::vocab::{Alphabet, TokenId, TokenSequence, Vocabulary};

/// Longest substring considered when seeding the training vocabulary.
pub const SEED_MAX_CHARS: usize = 8;
/// Minimum corpus frequency for a multi-character seed substring.
pub const SEED_MIN_FREQ: u64 = 2;

/// All vocabulary matches over one string, with path counts.
///
/// Path counts saturate at `u128::MAX`.
#[derive(Debug, Clone)]
pub struct TokenLattice {
    len: usize,
    edges: Vec<(usize, usize, TokenId)>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    forward: Vec<u128>,
    backward: Vec<u128>,
}

impl TokenLattice {
    /// Lattice of word-initial vocabulary tokens matching substrings of `text`.
    pub fn build(vocab: &Vocabulary, text: &str) -> Self {
        Self::with_lookup(text, vocab.max_token_chars(), |s| vocab.lookup(s, false))
    }

    /// Lattice over an arbitrary surface lookup. Substrings longer than `max_chars` are
    /// never looked up.
    pub fn with_lookup(text: &str, max_chars: usize, lookup: impl Fn(&str) -> Option<TokenId>) -> Self {
        let bounds: Vec<usize> = text
            .char_indices()
            .map(|(b, _)| b)
            .chain(std::iter::once(text.len()))
            .collect();
        let len = bounds.len() - 1;
        let mut edges = Vec::new();
        let mut outgoing = vec![Vec::new(); len + 1];
        let mut incoming = vec![Vec::new(); len + 1];
        for i in 0..len {
            for j in i + 1..=(i + max_chars).min(len) {
                if let Some(id) = lookup(&text[bounds[i]..bounds[j]]) {
                    outgoing[i].push(edges.len());
                    incoming[j].push(edges.len());
                    edges.push((i, j, id));
                }
            }
        }
        let mut forward = vec![0u128; len + 1];
        forward[0] = 1;
        for j in 1..=len {
            forward[j] = incoming[j]
                .iter()
                .fold(0u128, |acc, &e| acc.saturating_add(forward[edges[e].0]));
        }
        let mut backward = vec![0u128; len + 1];
        backward[len] = 1;
        for i in (0..len).rev() {
            backward[i] = outgoing[i]
                .iter()
                .fold(0u128, |acc, &e| acc.saturating_add(backward[edges[e].1]));
        }
        Self {
            len,
            edges,
            outgoing,
            incoming,
            forward,
            backward,
        }
    }

    /// Number of characters (nodes are `0..=len`).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Edges `(start, end, token)` in construction order.
    pub fn edges(&self) -> &[(usize, usize, TokenId)] {
        &self.edges
    }

    /// Number of tokenizations of the prefix ending at `node`.
    pub fn forward_paths(&self, node: usize) -> u128 {
        self.forward[node]
    }

    /// Number of tokenizations of the suffix starting at `node`.
    pub fn backward_paths(&self, node: usize) -> u128 {
        self.backward[node]
    }

    /// Total number of tokenizations of the string.
    pub fn total_paths(&self) -> u128 {
        self.forward[self.len]
    }

    /// Highest-scoring tokenization under per-token log scores, skipping `excluded`.
    ///
    /// Ties in score (see [`scores_tie`]) go to fewer tokens, then to the
    /// lexicographically smallest id sequence. Returns `None` when no tokenization exists.
    pub fn viterbi(&self, log_scores: &[f64], excluded: Option<TokenId>) -> Option<(f64, Vec<TokenId>)> {
        let mut best: Vec<Option<(f64, Vec<TokenId>)>> = vec![None; self.len + 1];
        best[0] = Some((0.0, Vec::new()));
        for j in 1..=self.len {
            let mut current: Option<(f64, Vec<TokenId>)> = None;
            for &e in &self.incoming[j] {
                let (i, _, id) = self.edges[e];
                if Some(id) == excluded {
                    continue;
                }
                let Some((prev_score, prev_path)) = &best[i] else { continue };
                let score = prev_score + log_scores[id as usize];
                let replace = match &current {
                    None => true,
                    Some((cur_score, cur_path)) => {
                        compare_paths(score, prev_path, id, *cur_score, cur_path) == Ordering::Less
                    }
                };
                if replace {
                    let mut path = prev_path.clone();
                    path.push(id);
                    current = Some((score, path));
                }
            }
            best[j] = current;
        }
        best.pop().flatten()
    }

    /// First character position that no tokenization can get past.
    fn first_gap(&self) -> usize {
        let mut reachable = vec![false; self.len + 1];
        reachable[0] = true;
        let mut furthest = 0;
        for i in 0..self.len {
            if !reachable[i] {
                continue;
            }
            furthest = furthest.max(i);
            for &e in &self.outgoing[i] {
                reachable[self.edges[e].1] = true;
            }
        }
        furthest
    }
}

/// Relative difference below which two path log scores count as equal. Scores are
/// normalized counts, so equal products often differ in the last bits once summed
/// as logarithms.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-9;

/// Whether two path log scores are equal up to [`SCORE_TIE_TOLERANCE`].
pub fn scores_tie(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= SCORE_TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Orders a candidate path `prefix | id` with `score` against the incumbent:
/// `Less` means the candidate is preferred.
fn compare_paths(score: f64, prefix: &[TokenId], id: TokenId, cur_score: f64, cur: &[TokenId]) -> Ordering {
    if !scores_tie(score, cur_score) {
        return if score > cur_score { Ordering::Less } else { Ordering::Greater };
    }
    (prefix.len() + 1)
        .cmp(&cur.len())
        .then_with(|| prefix.iter().chain(std::iter::once(&id)).cmp(cur.iter()))
}

/// Occurrences of `token` summed over every tokenization in the lattice.
pub fn count_token_occurrences(lattice: &TokenLattice, token: TokenId) -> u128 {
    lattice
        .edges
        .iter()
        .filter(|e| e.2 == token)
        .fold(0u128, |acc, &(i, j, _)| {
            acc.saturating_add(lattice.forward[i].saturating_mul(lattice.backward[j]))
        })
}

/// Most likely tokenization of `text` under the spec's scores.
pub fn encode_unigram(spec: &TokenizerSpec, text: &str) -> Result<TokenSequence> {
    let lattice = TokenLattice::build(spec.vocab(), text);
    match lattice.viterbi(spec.log_scores(), None) {
        Some((_, path)) => Ok(path),
        None => {
            let position = lattice.first_gap();
            let ch = text.chars().nth(position).unwrap_or_default();
            Err(Error::Encoding { ch, position })
        }
    }
}

/// Prunes a seed vocabulary down to `target_vocab_size`.
///
/// Each round scores every token from exact lattice counts, measures how much the
/// corpus loss `sum -log r(best tokenization)` grows when a token is dropped, and
/// removes the `prune_fraction` of multi-character tokens that hurt least.
/// Single-character tokens are never removed, so the result may stay above target.
pub fn train_unigram<S: AsRef<str>>(
    corpus: &[S],
    target_vocab_size: usize,
    prune_fraction: f64,
    pretokenize: bool,
) -> Result<TokenizerSpec> {
    if corpus.is_empty() || corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    if !(prune_fraction > 0.0 && prune_fraction < 1.0) {
        return Err(Error::Validation(format!(
            "prune fraction must lie in (0, 1), got {prune_fraction}"
        )));
    }
    let alphabet = Alphabet::from_texts(corpus)?;
    let WordCounts { words, counts } = collect_words(corpus, pretokenize);

    let mut active = seed_vocabulary(&alphabet, &words, &counts, target_vocab_size);
    loop {
        let index: HashMap<&str, TokenId> = active
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as TokenId))
            .collect();
        let max_chars = active.iter().map(|s| s.chars().count()).max().unwrap_or(1);
        let lattices: Vec<TokenLattice> = words
            .iter()
            .map(|w| TokenLattice::with_lookup(w, max_chars, |s| index.get(s).copied()))
            .collect();
        let scores = token_scores(&lattices, &counts, active.len());

        let removable: Vec<TokenId> = (0..active.len() as TokenId)
            .filter(|&id| active[id as usize].chars().count() > 1)
            .collect();
        if active.len() <= target_vocab_size || removable.is_empty() {
            let vocab = Vocabulary::from_surfaces(active.into_iter().map(|s| (s, false)))?;
            return TokenizerSpec::new(
                TokenizerKind::Unigram,
                alphabet,
                vocab,
                None,
                Some(scores),
                pretokenize,
            );
        }

        let log_scores: Vec<f64> = scores.iter().map(|s| s.ln()).collect();
        let increases = removal_loss_increases(&lattices, &counts, &log_scores);
        let mut ranked: Vec<(f64, TokenId)> = removable
            .iter()
            .map(|&id| (increases.get(&id).copied().unwrap_or(0.0), id))
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let batch = ((prune_fraction * removable.len() as f64).ceil() as usize)
            .clamp(1, active.len() - target_vocab_size)
            .min(removable.len());
        let mut drop = vec![false; active.len()];
        for &(_, id) in &ranked[..batch] {
            drop[id as usize] = true;
        }
        active = active
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop[*i])
            .map(|(_, s)| s)
            .collect();
    }
}

/// Seed vocabulary: every character, then every substring of up to
/// [`SEED_MAX_CHARS`] characters seen at least [`SEED_MIN_FREQ`] times. When that is
/// smaller than `target`, rarer substrings are added by decreasing frequency.
fn seed_vocabulary(alphabet: &Alphabet, words: &[String], counts: &[u64], target: usize) -> Vec<String> {
    let mut freq: HashMap<String, u64> = HashMap::new();
    for (word, &count) in words.iter().zip(counts) {
        let chars: Vec<char> = word.chars().collect();
        for i in 0..chars.len() {
            for j in i + 2..=(i + SEED_MAX_CHARS).min(chars.len()) {
                *freq.entry(chars[i..j].iter().collect()).or_default() += count;
            }
        }
    }
    let mut seed: Vec<String> = alphabet.chars().iter().map(|c| c.to_string()).collect();
    let mut frequent: Vec<&String> = freq.iter().filter(|(_, &f)| f >= SEED_MIN_FREQ).map(|(s, _)| s).collect();
    frequent.sort_by(|a, b| a.chars().count().cmp(&b.chars().count()).then(a.cmp(b)));
    seed.extend(frequent.into_iter().cloned());

    if seed.len() < target {
        let mut rare: Vec<(&String, u64)> = freq
            .iter()
            .filter(|(_, &f)| f < SEED_MIN_FREQ)
            .map(|(s, &f)| (s, f))
            .collect();
        rare.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then(a.0.chars().count().cmp(&b.0.chars().count()))
                .then(a.0.cmp(b.0))
        });
        let missing = target - seed.len();
        seed.extend(rare.into_iter().take(missing).map(|(s, _)| s.clone()));
    }
    seed
}

/// `r(t) = freq(t) / sum freq` from exact lattice counts, weighted by word counts.
fn token_scores(lattices: &[TokenLattice], counts: &[u64], vocab_len: usize) -> Vec<f64> {
    let mut freq = vec![0f64; vocab_len];
    for (lattice, &count) in lattices.iter().zip(counts) {
        for &(i, j, id) in &lattice.edges {
            let occ = lattice.forward[i].saturating_mul(lattice.backward[j]);
            freq[id as usize] += occ as f64 * count as f64;
        }
    }
    let total: f64 = freq.iter().sum();
    freq.into_iter().map(|f| f / total).collect()
}

/// Growth of `sum_w count(w) * -log r(best tokenization of w)` when each token is
/// removed. Tokens absent from every best path are omitted (their increase is zero).
fn removal_loss_increases(lattices: &[TokenLattice], counts: &[u64], log_scores: &[f64]) -> BTreeMap<TokenId, f64> {
    let mut increases: BTreeMap<TokenId, f64> = BTreeMap::new();
    for (lattice, &count) in lattices.iter().zip(counts) {
        let Some((best, path)) = lattice.viterbi(log_scores, None) else { continue };
        let mut used = path.clone();
        used.sort_unstable();
        used.dedup();
        for id in used {
            let without = lattice
                .viterbi(log_scores, Some(id))
                .map_or(f64::INFINITY, |(s, _)| best - s);
            *increases.entry(id).or_default() += count as f64 * without;
        }
    }
    increases
}
