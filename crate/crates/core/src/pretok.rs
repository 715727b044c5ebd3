//! Rule-based pretokenizer.
//!
//! A segment is one of: a maximal letter run, optionally preceded by a single space;
//! a maximal digit run, optionally preceded by a single space; or any other single
//! character (including a space that does not lead a run). Every prefix of a segment
//! is again a segment, so the splitter is closed under prefix and encoding segment by
//! segment keeps tokenizers non-recovering.

use crate::error::Result;
use crate::spec::TokenizerSpec;
use crate::vocab::{Alphabet, TokenSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharClass {
    Letter,
    Digit,
    Space,
    Other,
}

pub fn classify(c: char) -> CharClass {
    if c == ' ' {
        CharClass::Space
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Decides whether a whole string is a single pretokenizer segment.
pub trait SegmentRule {
    fn is_match(&self, segment: &str) -> bool;
}

/// The shipped segmentation rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct PretokenRule;

impl SegmentRule for PretokenRule {
    fn is_match(&self, segment: &str) -> bool {
        let mut chars = segment.chars().peekable();
        let Some(&first) = chars.peek() else {
            return false;
        };
        if first == ' ' {
            chars.next();
            if chars.peek().is_none() {
                return true;
            }
        }
        let rest: Vec<CharClass> = chars.map(classify).collect();
        match rest.first() {
            Some(CharClass::Letter) => rest.iter().all(|&c| c == CharClass::Letter),
            Some(CharClass::Digit) => rest.iter().all(|&c| c == CharClass::Digit),
            Some(_) => first != ' ' && rest.len() == 1,
            None => false,
        }
    }
}

/// Splits `text` into segments under the shipped rule.
pub fn pretokenize(text: &str) -> Vec<&str> {
    segment_bounds(text)
        .into_iter()
        .map(|(start, end)| &text[start..end])
        .collect()
}

/// Character spans `[start, end)` of the shipped rule's segments.
pub fn segment_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut pos = 0;
    for segment in pretokenize(text) {
        let len = segment.chars().count();
        spans.push((pos, pos + len));
        pos += len;
    }
    spans
}

fn segment_bounds(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut bounds = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        let mut class = classify(chars[i].1);
        if class == CharClass::Space {
            if let Some(&(_, next)) = chars.get(i + 1) {
                let next_class = classify(next);
                if matches!(next_class, CharClass::Letter | CharClass::Digit) {
                    i += 1;
                    class = next_class;
                }
            }
        }
        match class {
            CharClass::Letter | CharClass::Digit => {
                while i < chars.len() && classify(chars[i].1) == class {
                    i += 1;
                }
            }
            CharClass::Space | CharClass::Other => i += 1,
        }
        bounds.push((byte_at(start), byte_at(i)));
    }
    bounds
}

/// Greedy segmentation under an arbitrary rule: repeatedly takes the longest
/// matching prefix, falling back to a single character when nothing matches.
pub fn pretokenize_with<'a, R: SegmentRule + ?Sized>(rule: &R, text: &'a str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let ends: Vec<usize> = rest
            .char_indices()
            .map(|(b, c)| b + c.len_utf8())
            .collect();
        let end = ends
            .iter()
            .rev()
            .copied()
            .find(|&e| rule.is_match(&rest[..e]))
            .unwrap_or(ends[0]);
        out.push(&rest[..end]);
        rest = &rest[end..];
    }
    out
}

/// Exhaustively checks that every prefix of every matching string (over `alphabet`,
/// up to `max_len` characters) also matches.
pub fn verify_closed_under_prefix<R: SegmentRule + ?Sized>(
    rule: &R,
    max_len: usize,
    alphabet: &Alphabet,
) -> bool {
    find_prefix_violation(rule, max_len, alphabet).is_none()
}

/// First matching string (in enumeration order) with a non-matching prefix.
pub fn find_prefix_violation<R: SegmentRule + ?Sized>(
    rule: &R,
    max_len: usize,
    alphabet: &Alphabet,
) -> Option<String> {
    let chars = alphabet.chars();
    let mut current = String::new();
    fn walk<R: SegmentRule + ?Sized>(
        rule: &R,
        chars: &[char],
        max_len: usize,
        depth: usize,
        current: &mut String,
    ) -> Option<String> {
        if depth > 0 && rule.is_match(current) {
            let mut ends = current.char_indices().map(|(b, _)| b).skip(1);
            if ends.any(|e| !rule.is_match(&current[..e])) {
                return Some(current.clone());
            }
        }
        if depth == max_len {
            return None;
        }
        for &c in chars {
            current.push(c);
            let found = walk(rule, chars, max_len, depth + 1, current);
            current.pop();
            if found.is_some() {
                return found;
            }
        }
        None
    }
    walk(rule, chars, max_len, 0, &mut current)
}

/// Encodes each pretokenizer segment independently and concatenates the results.
pub fn encode_pretokenized(spec: &TokenizerSpec, text: &str) -> Result<TokenSequence> {
    let mut out = Vec::new();
    for (index, segment) in pretokenize(text).into_iter().enumerate() {
        let ids = spec
            .encode_segment(segment)
            .map_err(|e| e.in_segment(index))?;
        out.extend(ids);
    }
    Ok(out)
}
