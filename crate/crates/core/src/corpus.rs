use std::collections::HashMap;

use crate::pretok::pretokenize;

/// Distinct training words in first-appearance order with their multiplicities.
pub(crate) struct WordCounts {
    pub words: Vec<String>,
    pub counts: Vec<u64>,
}

/// Splits the corpus into training words: whole lines, or pretokenizer segments when
/// `pretokenize` is set. Empty strings are dropped.
pub(crate) fn collect_words<S: AsRef<str>>(corpus: &[S], pretokenize_lines: bool) -> WordCounts {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut words = Vec::new();
    let mut counts = Vec::new();
    let mut add = |w: &str| {
        if w.is_empty() {
            return;
        }
        match index.get(w) {
            Some(&i) => counts[i] += 1,
            None => {
                index.insert(w.to_owned(), words.len());
                words.push(w.to_owned());
                counts.push(1);
            }
        }
    };
    for line in corpus {
        let line = line.as_ref();
        if pretokenize_lines {
            for segment in pretokenize(line) {
                add(segment);
            }
        } else {
            add(line);
        }
    }
    WordCounts { words, counts }
}
