//! Phrase compilation and leftmost-longest hit selection.

use regex::Regex;

use crate::model::Category;

/// A phrase hit. Offsets are bytes into the searched text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMatch {
    pub category: Category,
    /// Attribute index within the category entry; `None` for header hits.
    pub attribute: Option<usize>,
    pub start: usize,
    pub end: usize,
}

impl PhraseMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Case-insensitive, whitespace-tolerant regex for a literal phrase.
///
/// Tokens are joined by `\s+`; a word boundary is required only at edges
/// that are alphanumeric, so `"lymph node metastasis:"` still matches
/// before any following character.
pub(crate) fn phrase_regex(phrase: &str) -> Result<Regex, regex::Error> {
    let tokens: Vec<String> = phrase.split_whitespace().map(regex::escape).collect();
    let mut pattern = String::from("(?i)");
    if phrase.trim_start().starts_with(char::is_alphanumeric) {
        pattern.push_str(r"\b");
    }
    pattern.push_str(&tokens.join(r"\s+"));
    if phrase.trim_end().ends_with(char::is_alphanumeric) {
        pattern.push_str(r"\b");
    }
    Regex::new(&pattern)
}

/// Lowercased phrase with internal whitespace collapsed.
pub fn normalize_phrase(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone)]
pub(crate) struct Phrase {
    pub regex: Regex,
    /// Position in the owning list, used as the final tie-breaker.
    pub order: usize,
}

impl Phrase {
    pub fn compile(text: &str, order: usize) -> Result<Phrase, regex::Error> {
        Ok(Phrase {
            regex: phrase_regex(text)?,
            order,
        })
    }
}

/// Picks non-overlapping hits: earliest start first, then longest, then
/// lowest `order`.
pub(crate) fn leftmost_longest(mut hits: Vec<(PhraseMatch, usize)>) -> Vec<PhraseMatch> {
    hits.sort_by(|(a, ao), (b, bo)| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then(ao.cmp(bo))
    });
    let mut out: Vec<PhraseMatch> = Vec::new();
    let mut frontier = 0usize;
    for (hit, _) in hits {
        if hit.is_empty() {
            continue;
        }
        if out.is_empty() || hit.start >= frontier {
            frontier = hit.end;
            out.push(hit);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrase_regex_boundaries() {
        let re = phrase_regex("measure").unwrap();
        assert!(re.is_match("tumors measure 2 cm"));
        assert!(!re.is_match("tumor measures 2 cm"));
        let colon = phrase_regex("number involved:").unwrap();
        assert!(colon.is_match("Number   Involved:3"));
        let paren = phrase_regex("number involved (total)").unwrap();
        assert!(paren.is_match("number involved (total) 4"));
    }

    #[test]
    fn leftmost_then_longest() {
        let h = |start, end, order| {
            (
                PhraseMatch {
                    category: Category::Margins,
                    attribute: Some(order),
                    start,
                    end,
                },
                order,
            )
        };
        let picked = leftmost_longest(vec![h(0, 8, 0), h(0, 18, 1), h(4, 30, 2), h(20, 25, 3)]);
        let spans: Vec<_> = picked.iter().map(|p| (p.start, p.end)).collect();
        assert_eq!(spans, vec![(0, 18), (20, 25)]);
    }
}
