//! Reference encoders written independently of the library's encoders.

use canontok::unigram::scores_tie;
use canontok::{TokenId, TokenizerSpec};

/// Applies each merge rule in learned order, left to right over the sequence.
pub fn naive_bpe(spec: &TokenizerSpec, text: &str) -> Vec<TokenId> {
    let mut seq: Vec<TokenId> = text
        .chars()
        .map(|c| spec.vocab().lookup(&c.to_string(), false).unwrap())
        .collect();
    for m in spec.merges() {
        let mut out = Vec::with_capacity(seq.len());
        let mut i = 0;
        while i < seq.len() {
            if i + 1 < seq.len() && seq[i] == m.left && seq[i + 1] == m.right {
                out.push(m.merged);
                i += 2;
            } else {
                out.push(seq[i]);
                i += 1;
            }
        }
        seq = out;
    }
    seq
}

/// Greedy longest match found by scanning the whole vocabulary at each position.
pub fn scanning_wordpiece(spec: &TokenizerSpec, text: &str) -> Option<Vec<TokenId>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let best = spec
            .vocab()
            .tokens()
            .iter()
            .filter(|t| t.continuation == (i > 0))
            .filter(|t| {
                let s: Vec<char> = t.surface.chars().collect();
                chars[i..].starts_with(&s)
            })
            .max_by_key(|t| t.surface.chars().count())?;
        out.push(best.id);
        i += best.surface.chars().count();
    }
    Some(out)
}

/// Best segmentation over all word-initial segmentations, by left-to-right log score,
/// then fewer tokens, then smaller ids.
pub fn brute_force_unigram(spec: &TokenizerSpec, text: &str) -> Option<Vec<TokenId>> {
    let mut all = Vec::new();
    fn segment(spec: &TokenizerSpec, rest: &str, current: &mut Vec<TokenId>, all: &mut Vec<Vec<TokenId>>) {
        if rest.is_empty() {
            all.push(current.clone());
            return;
        }
        for t in spec.vocab().tokens() {
            if let Some(tail) = rest.strip_prefix(t.surface.as_str()) {
                current.push(t.id);
                segment(spec, tail, current, all);
                current.pop();
            }
        }
    }
    segment(spec, text, &mut Vec::new(), &mut all);
    let score = |seq: &[TokenId]| seq.iter().fold(0.0, |acc, &t| acc + spec.scores()[t as usize].ln());
    all.into_iter().min_by(|a, b| {
        let (sa, sb) = (score(a), score(b));
        if !scores_tie(sa, sb) {
            sb.partial_cmp(&sa).unwrap()
        } else {
            a.len().cmp(&b.len()).then_with(|| a.cmp(b))
        }
    })
}
