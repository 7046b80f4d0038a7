//! Quantity and count scanning over raw text.
//!
//! Offsets returned here are byte offsets into the scanned slice; callers
//! convert them to character spans.

use std::sync::OnceLock;

use regex::Regex;

/// Word-number table, zero through twenty.
const WORD_NUMBERS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

pub fn word_number(word: &str) -> Option<u32> {
    let lower = word.to_ascii_lowercase();
    WORD_NUMBERS
        .iter()
        .position(|w| *w == lower)
        .map(|i| i as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthUnit {
    Centimetre,
    Millimetre,
}

impl LengthUnit {
    fn parse(raw: &str) -> LengthUnit {
        if raw.to_ascii_lowercase().starts_with('m') {
            LengthUnit::Millimetre
        } else {
            LengthUnit::Centimetre
        }
    }
}

/// A length expression: one to three dimensions with an optional unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub start: usize,
    pub end: usize,
    pub dims: Vec<f64>,
    pub unit: Option<LengthUnit>,
}

impl Quantity {
    /// Greatest dimension in cm; a missing unit is read as cm.
    pub fn greatest_cm(&self) -> f64 {
        let max = self.dims.iter().copied().fold(f64::MIN, f64::max);
        match self.unit {
            Some(LengthUnit::Millimetre) => max / 10.0,
            _ => max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountToken {
    pub start: usize,
    pub end: usize,
    pub value: u32,
}

const NUM: &str = r"(\d+(?:\.\d+)?|\.\d+)";
const UNIT: &str = r"(centimet(?:er|re)s?|millimet(?:er|re)s?|cm|mm)\b";

fn quantity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let sep = r"\s*(?:x|×|by)\s*";
        Regex::new(&format!(
            r"(?i){NUM}(?:{sep}{NUM})?(?:{sep}{NUM})?(?:\s*{UNIT})?"
        ))
        .expect("quantity regex")
    })
}

fn word_quantity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let words = WORD_NUMBERS.join("|");
        Regex::new(&format!(r"(?i)\b({words})\s+{UNIT}")).expect("word quantity regex")
    })
}

fn integer_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let words = WORD_NUMBERS.join("|");
        Regex::new(&format!(r"(?i)\d+|\b(?:{words})\b")).expect("integer regex")
    })
}

fn unit_follows_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"(?i)^\s*{UNIT}")).expect("unit regex"))
}

fn prev_char(text: &str, at: usize) -> Option<char> {
    text[..at].chars().next_back()
}

fn next_char(text: &str, at: usize) -> Option<char> {
    text[at..].chars().next()
}

/// A digit run must not be glued to letters or other digits/decimals
/// (so `pT2`, `8th` and `levels II-IV` never read as quantities).
fn isolated(text: &str, start: usize, end: usize) -> bool {
    let before_ok = match prev_char(text, start) {
        Some(c) => !(c.is_alphanumeric() || c == '.' || c == '_'),
        None => true,
    };
    let after_ok = match next_char(text, end) {
        Some(c) => !(c.is_alphanumeric() || c == '_'),
        None => true,
    };
    before_ok && after_ok
}

/// All length expressions in `text`, in order.
pub fn find_lengths(text: &str) -> Vec<Quantity> {
    let mut out = Vec::new();
    for caps in quantity_re().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let unit = caps.get(4).map(|u| LengthUnit::parse(u.as_str()));
        // The unit regex already ends on a word boundary; without a unit the
        // expression must end cleanly after its last digit.
        let clean = match unit {
            None => isolated(text, whole.start(), whole.end()),
            Some(_) => !prev_char(text, whole.start())
                .is_some_and(|c| c.is_alphanumeric() || c == '.' || c == '_'),
        };
        if !clean {
            continue;
        }
        let dims: Vec<f64> = (1..=3)
            .filter_map(|i| caps.get(i))
            .filter_map(|m| m.as_str().parse().ok())
            .collect();
        if dims.is_empty() {
            continue;
        }
        out.push(Quantity {
            start: whole.start(),
            end: whole.end(),
            dims,
            unit,
        });
    }
    for caps in word_quantity_re().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let value = word_number(&caps[1]).expect("word in table");
        out.push(Quantity {
            start: whole.start(),
            end: whole.end(),
            dims: vec![f64::from(value)],
            unit: Some(LengthUnit::parse(&caps[2])),
        });
    }
    out.sort_by_key(|q| q.start);
    out
}

/// Length expressions that carry an explicit unit.
pub fn find_unit_lengths(text: &str) -> Vec<Quantity> {
    find_lengths(text)
        .into_iter()
        .filter(|q| q.unit.is_some())
        .collect()
}

/// Integer tokens (digits or number words) that are not part of a decimal
/// or a length.
pub fn find_counts(text: &str) -> Vec<CountToken> {
    let mut out = Vec::new();
    for m in integer_re().find_iter(text) {
        let (start, end) = (m.start(), m.end());
        let is_digit = m.as_str().as_bytes()[0].is_ascii_digit();
        let value = if is_digit {
            if !isolated(text, start, end) {
                continue;
            }
            // Reject "2.8" style decimals from either side.
            let rest = &text[end..];
            if rest.starts_with('.') && rest[1..].starts_with(|c: char| c.is_ascii_digit()) {
                continue;
            }
            match m.as_str().parse::<u32>() {
                Ok(v) => v,
                Err(_) => continue,
            }
        } else {
            word_number(m.as_str()).expect("word in table")
        };
        if unit_follows_re().is_match(&text[end..]) {
            continue;
        }
        out.push(CountToken { start, end, value });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_yields_greatest_dimension() {
        let q = find_lengths("nodules (0.7 x 0.5 x 0.4 cm and 0.6 x 0.5 x 0.4 cm)");
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].greatest_cm(), 0.7);
        assert_eq!(q[1].greatest_cm(), 0.6);
    }

    #[test]
    fn millimetres_and_words() {
        let q = find_lengths("tumor measuring 12 mm");
        assert_eq!(q.len(), 1);
        assert!((q[0].greatest_cm() - 1.2).abs() < 1e-12);
        let w = find_lengths("three centimeters across");
        assert_eq!(w[0].greatest_cm(), 3.0);
        assert_eq!(&"three centimeters across"[w[0].start..w[0].end], "three centimeters");
    }

    #[test]
    fn glued_digits_are_not_quantities() {
        assert!(find_lengths("pT2 and 8th edition").is_empty());
        assert!(find_counts("pT2 8th").is_empty());
    }

    #[test]
    fn counts_skip_decimals_and_lengths() {
        let c = find_counts("23. Level VI, 2.8 cm, 4 mm, (1 of 3), twelve");
        let values: Vec<u32> = c.iter().map(|t| t.value).collect();
        assert_eq!(values, vec![23, 1, 3, 12]);
    }

    #[test]
    fn bare_number_without_unit() {
        let q = find_lengths("Greatest dimension: 2.8.");
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].unit, None);
        assert_eq!(q[0].greatest_cm(), 2.8);
    }
}
