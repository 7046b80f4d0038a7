//! TNM code scanning.
//!
//! Recognizes `T`, `N` and `M` components, alone or run together
//! (`pT1N1`, `pT2pN1bM0`), with optional `p`/`c`/`y`/`r` prefixes and
//! sub-letters. The sub-letter stays in the surface; the value is the bare
//! code (`pN1b` is N1).

use std::sync::OnceLock;

use regex::Regex;

use crate::model::{AttributeValue, Category};

#[derive(Debug, Clone, PartialEq)]
pub struct TnmHit {
    pub category: Category,
    /// Byte offsets into the scanned text.
    pub start: usize,
    pub end: usize,
    pub value: AttributeValue,
}

const T: &str = r"((?:[yr]?[pc])?T([0-4]|X)[a-d]?(?:\(m\))?)";
const N: &str = r"((?:[yr]?[pc])?N([0-3]|X)[a-c]?)";
const M: &str = r"((?:[yr]?[pc])?M([01]|X))";

fn tnm_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Three alternatives so that no branch can match the empty string.
    RE.get_or_init(|| {
        Regex::new(&format!("{T}{N}?{M}?|{N}{M}?|{M}")).expect("tnm regex")
    })
}

fn boundary_ok(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// Every TNM component in `text`, ordered by start offset.
pub fn scan_tnm(text: &str) -> Vec<TnmHit> {
    // (whole group, code group, category, letter) per component slot.
    const SLOTS: [(usize, usize, Category, char); 6] = [
        (1, 2, Category::PrimaryTumorTNM, 'T'),
        (3, 4, Category::LymphNodesTNM, 'N'),
        (5, 6, Category::DistantMetastasis, 'M'),
        (7, 8, Category::LymphNodesTNM, 'N'),
        (9, 10, Category::DistantMetastasis, 'M'),
        (11, 12, Category::DistantMetastasis, 'M'),
    ];
    let mut out = Vec::new();
    for caps in tnm_re().captures_iter(text) {
        let whole = caps.get(0).expect("match");
        if !boundary_ok(text, whole.start(), whole.end()) {
            continue;
        }
        for (g, code, category, letter) in SLOTS {
            let (Some(m), Some(c)) = (caps.get(g), caps.get(code)) else {
                continue;
            };
            let Ok(value) = AttributeValue::tnm(&format!("{letter}{}", c.as_str())) else {
                continue;
            };
            out.push(TnmHit {
                category,
                start: m.start(),
                end: m.end(),
                value,
            });
        }
    }
    out
}
