//! Alphabets, tokens and vocabularies.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense token index into a [`Vocabulary`].
pub type TokenId = u32;

/// Ordered token ids. May be empty only as a generation prefix.
pub type TokenSequence = Vec<TokenId>;

/// The character set a tokenizer was trained on, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    chars: Vec<char>,
}

impl Alphabet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut chars: Vec<char> = chars.into_iter().collect();
        let before = chars.len();
        chars.sort_unstable();
        chars.dedup();
        if chars.len() != before {
            return Err(Error::Validation("alphabet contains duplicate characters".into()));
        }
        if chars.is_empty() {
            return Err(Error::Validation("alphabet is empty".into()));
        }
        Ok(Self { chars })
    }

    /// Collects every character occurring in `texts`.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let mut chars: Vec<char> = texts.iter().flat_map(|t| t.as_ref().chars()).collect();
        chars.sort_unstable();
        chars.dedup();
        Self::new(chars)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.binary_search(&c).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    /// The string this token decodes to, without any continuation marker.
    pub surface: String,
    /// WordPiece word-internal token (rendered with a `##` prefix). Always false for
    /// BPE and Unigram.
    pub continuation: bool,
}

impl Token {
    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.continuation {
            write!(f, "##{}", self.surface)
        } else {
            f.write_str(&self.surface)
        }
    }
}

/// Token inventory with id and surface lookups.
///
/// Ids are dense and assigned in construction order. Surface lookups are keyed by
/// `(surface, continuation)`; when several tokens share a key (possible for BPE),
/// the lookup resolves to the smallest id.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    by_surface: HashMap<String, [Option<TokenId>; 2]>,
    char_lens: Vec<usize>,
    max_token_chars: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let mut by_surface = HashMap::with_capacity(tokens.len());
        for (index, token) in tokens.iter().enumerate() {
            if token.id as usize != index {
                return Err(Error::Validation(format!(
                    "token ids must be dense: position {index} holds id {}",
                    token.id
                )));
            }
            if token.surface.is_empty() {
                return Err(Error::Validation(format!("token {} has an empty surface", token.id)));
            }
            let slot = &mut by_surface.entry(token.surface.clone()).or_insert([None; 2])
                [token.continuation as usize];
            if slot.is_none() {
                *slot = Some(token.id);
            }
        }
        let char_lens: Vec<usize> = tokens.iter().map(Token::char_len).collect();
        let max_token_chars = char_lens.iter().copied().max().unwrap_or(0);
        Ok(Self {
            tokens,
            by_surface,
            char_lens,
            max_token_chars,
        })
    }

    /// Builds a vocabulary from `(surface, continuation)` pairs, assigning ids in order.
    pub fn from_surfaces<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        let tokens = surfaces
            .into_iter()
            .enumerate()
            .map(|(i, (surface, continuation))| Token {
                id: i as TokenId,
                surface: surface.into(),
                continuation,
            })
            .collect();
        Self::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn get(&self, id: TokenId) -> Option<&Token> {
        self.tokens.get(id as usize)
    }

    pub fn token(&self, id: TokenId) -> Result<&Token> {
        self.get(id).ok_or(Error::InvalidSequence { id })
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn lookup(&self, surface: &str, continuation: bool) -> Option<TokenId> {
        self.by_surface.get(surface)?[continuation as usize]
    }

    /// Length of token `id` in characters. Panics on an invalid id.
    pub fn char_len(&self, id: TokenId) -> usize {
        self.char_lens[id as usize]
    }

    pub fn max_token_chars(&self) -> usize {
        self.max_token_chars
    }

    /// Groups of token ids sharing one `(surface, continuation)` key.
    pub fn duplicate_surfaces(&self) -> Vec<Vec<TokenId>> {
        let mut groups: HashMap<(&str, bool), Vec<TokenId>> = HashMap::new();
        for token in &self.tokens {
            groups
                .entry((token.surface.as_str(), token.continuation))
                .or_default()
                .push(token.id);
        }
        let mut dups: Vec<Vec<TokenId>> = groups.into_values().filter(|g| g.len() > 1).collect();
        dups.sort();
        dups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(['a', 'a']).is_err());
        assert!(Alphabet::new([]).is_err());
        let alpha = Alphabet::new(['b', 'a']).unwrap();
        assert_eq!(alpha.chars(), &['a', 'b']);
        assert!(alpha.contains('b'));
        assert!(!alpha.contains('c'));
    }

    #[test]
    fn vocabulary_requires_dense_ids() {
        let tokens = vec![Token {
            id: 1,
            surface: "a".into(),
            continuation: false,
        }];
        assert!(Vocabulary::new(tokens).is_err());
    }

    #[test]
    fn lookup_distinguishes_continuation() {
        let vocab = Vocabulary::from_surfaces([("a", false), ("a", true), ("ab", false)]).unwrap();
        assert_eq!(vocab.lookup("a", false), Some(0));
        assert_eq!(vocab.lookup("a", true), Some(1));
        assert_eq!(vocab.lookup("ab", true), None);
        assert_eq!(vocab.max_token_chars(), 2);
        assert!(vocab.duplicate_surfaces().is_empty());
    }

    #[test]
    fn duplicate_surfaces_resolve_to_smallest_id() {
        let vocab = Vocabulary::from_surfaces([("a", false), ("aa", false), ("aa", false)]).unwrap();
        assert_eq!(vocab.lookup("aa", false), Some(1));
        assert_eq!(vocab.duplicate_surfaces(), vec![vec![1, 2]]);
    }
}
