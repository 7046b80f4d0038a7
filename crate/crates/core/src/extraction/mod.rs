//! Mention extraction and feature-record assembly.
//!
//! Structured reports go through header segments. Narrative reports use
//! topic anchors for categorical values, a whole-text TNM scan, and the
//! key-string scan for numeric categories.

pub mod numeric;
pub mod tnm;

use thiserror::Error;

use crate::lexicon::{ExtractionLexicon, KeyTemplate};
use crate::model::{
    validate_document, AttributeValue, Category, FeatureRecord, Mention, ModelError,
    ReportDocument, ReportFormat, Span, TextIndex, ValueKind,
};
use crate::segmentation::{
    detect_format, segment_structured, segment_unstructured, sentence_end, sentence_start,
    Segment, SegmentError,
};

/// Longest wildcard segment of a gapped key string, in bytes.
pub const MAX_GAP: usize = 200;
/// Reach of a literal key string before and after its anchor, in bytes.
pub const LITERAL_WINDOW: usize = 120;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("invalid document: {0}")]
    InvalidDocument(#[from] ModelError),
    #[error("no parseable number in capture zone [{}, {})", .0.start, .0.end)]
    MalformedNumber(Span),
    #[error("{0} is not a numeric category")]
    NotNumeric(Category),
    #[error("{0} is a numeric category")]
    NotCategorical(Category),
}

fn mention(index: &TextIndex<'_>, category: Category, start: usize, end: usize, value: AttributeValue) -> Mention {
    Mention {
        category,
        surface: index.text()[start..end].to_string(),
        span: index.span_of_bytes(start, end),
        value,
    }
}

/// Attribute hits inside a segment body.
pub fn extract_categorical(
    index: &TextIndex<'_>,
    segment: &Segment,
    lexicon: &ExtractionLexicon,
) -> Result<Vec<Mention>, ExtractError> {
    let category = segment.category;
    if category.value_kind().is_numeric() {
        return Err(ExtractError::NotCategorical(category));
    }
    let range = index.byte_range(segment.body_span);
    let base = range.start;
    let body = &index.text()[range];
    // (start, end, value, priority)
    let mut candidates: Vec<(usize, usize, AttributeValue, usize)> = lexicon
        .find_attributes(category, body)
        .into_iter()
        .map(|h| {
            let value = lexicon.attribute_value(category, h.attribute.expect("attribute hit"));
            (h.start, h.end, value, 1)
        })
        .collect();
    if category.value_kind() == ValueKind::Tnm {
        candidates.extend(
            tnm::scan_tnm(body)
                .into_iter()
                .filter(|h| h.category == category)
                .map(|h| (h.start, h.end, h.value, 0)),
        );
    }
    Ok(select(candidates)
        .into_iter()
        .map(|(s, e, v)| mention(index, category, base + s, base + e, v))
        .collect())
}

/// Leftmost-longest selection over mixed candidates.
fn select(mut c: Vec<(usize, usize, AttributeValue, usize)>) -> Vec<(usize, usize, AttributeValue)> {
    c.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(a.3.cmp(&b.3)));
    let mut out: Vec<(usize, usize, AttributeValue)> = Vec::new();
    for (s, e, v, _) in c {
        if out.last().is_none_or(|last| s >= last.1) {
            out.push((s, e, v));
        }
    }
    out
}

fn length_value(q: &numeric::Quantity) -> Option<AttributeValue> {
    AttributeValue::length_cm(q.greatest_cm()).ok()
}

/// First number in a structured segment body.
pub fn extract_numeric_body(
    index: &TextIndex<'_>,
    segment: &Segment,
) -> Result<Vec<Mention>, ExtractError> {
    let category = segment.category;
    let range = index.byte_range(segment.body_span);
    let base = range.start;
    let body = &index.text()[range];
    let malformed = || ExtractError::MalformedNumber(segment.body_span);
    match category.value_kind() {
        ValueKind::Length => {
            let q = numeric::find_lengths(body)
                .into_iter()
                .find_map(|q| length_value(&q).map(|v| (q, v)))
                .ok_or_else(malformed)?;
            Ok(vec![mention(index, category, base + q.0.start, base + q.0.end, q.1)])
        }
        ValueKind::Count => {
            let c = *numeric::find_counts(body).first().ok_or_else(malformed)?;
            Ok(vec![mention(
                index,
                category,
                base + c.start,
                base + c.end,
                AttributeValue::Count(c.value),
            )])
        }
        _ => Err(ExtractError::NotNumeric(category)),
    }
}

/// (start, end, value) candidates of one numeric kind inside a zone.
fn zone_values(text: &str, lo: usize, hi: usize, kind: ValueKind) -> Vec<(usize, usize, AttributeValue)> {
    let zone = &text[lo..hi];
    match kind {
        ValueKind::Length => numeric::find_unit_lengths(zone)
            .into_iter()
            .filter_map(|q| length_value(&q).map(|v| (lo + q.start, lo + q.end, v)))
            .collect(),
        _ => numeric::find_counts(zone)
            .into_iter()
            .map(|c| (lo + c.start, lo + c.end, AttributeValue::Count(c.value)))
            .collect(),
    }
}

fn floor_boundary(text: &str, mut i: usize) -> usize {
    while !text.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn ceil_boundary(text: &str, mut i: usize) -> usize {
    while !text.is_char_boundary(i) {
        i += 1;
    }
    i
}

/// Applies a category's key strings and extension patterns to the whole
/// text. Errors only if something anchored and nothing was captured.
pub fn scan_key_strings(
    index: &TextIndex<'_>,
    category: Category,
    lexicon: &ExtractionLexicon,
) -> Result<Vec<Mention>, ExtractError> {
    let kind = category.value_kind();
    if !kind.is_numeric() {
        return Err(ExtractError::NotNumeric(category));
    }
    let text = index.text();
    let Some(set) = lexicon.key_strings(category) else {
        return Ok(Vec::new());
    };
    let mut captured: Vec<(usize, usize, AttributeValue)> = Vec::new();
    let mut malformed: Option<Span> = None;
    let push = |c: (usize, usize, AttributeValue), captured: &mut Vec<_>| {
        let dup = captured
            .iter()
            .any(|(s, e, _): &(usize, usize, AttributeValue)| c.0 < *e && *s < c.1);
        if !dup {
            captured.push(c);
        }
    };

    for (template, compiled) in set.templates().zip(lexicon.compiled_templates(category)) {
        for m in compiled.prefix.find_iter(text) {
            let found = match &compiled.suffix {
                Some(suffix) => {
                    let hi = ceil_boundary(text, (m.end() + MAX_GAP).min(text.len()))
                        .min(paragraph_limit(text, m.end()));
                    let Some(s) = suffix.find(&text[m.end()..hi]) else {
                        continue;
                    };
                    let values = zone_values(text, m.end(), m.end() + s.start(), kind);
                    match kind {
                        ValueKind::Length => values,
                        _ => values.into_iter().take(1).collect(),
                    }
                }
                None => {
                    let after_only = matches!(template, KeyTemplate::Literal(l) if l.ends_with(':'));
                    literal_capture(text, m.start(), m.end(), kind, after_only)
                        .into_iter()
                        .collect()
                }
            };
            if found.is_empty() {
                malformed.get_or_insert(index.span_of_bytes(m.start(), m.end()));
            }
            for c in found {
                push(c, &mut captured);
            }
        }
    }
    for (re, group) in lexicon.compiled_patterns(category) {
        for caps in re.captures_iter(text) {
            let Some(g) = caps.get(*group) else { continue };
            let values = zone_values(text, g.start(), g.end(), kind);
            if let Some(c) = values.into_iter().next() {
                push(c, &mut captured);
            }
        }
    }
    if captured.is_empty() {
        if let Some(span) = malformed {
            return Err(ExtractError::MalformedNumber(span));
        }
    }
    captured.sort_by_key(|c| c.0);
    Ok(captured
        .into_iter()
        .map(|(s, e, v)| mention(index, category, s, e, v))
        .collect())
}

fn paragraph_limit(text: &str, from: usize) -> usize {
    text[from..].find("\n\n").map_or(text.len(), |p| from + p)
}

/// Nearest value after (within the sentence) or before (within the
/// sentence) a literal anchor; ties go to the value after.
fn literal_capture(
    text: &str,
    start: usize,
    end: usize,
    kind: ValueKind,
    after_only: bool,
) -> Option<(usize, usize, AttributeValue)> {
    let after_hi = ceil_boundary(text, (end + LITERAL_WINDOW).min(text.len()));
    let after_hi = sentence_end(text, end).min(after_hi).max(end);
    let after = zone_values(text, end, after_hi, kind).into_iter().next();
    if after_only {
        return after;
    }
    let before_lo = floor_boundary(text, start.saturating_sub(LITERAL_WINDOW));
    let before_lo = sentence_start(text, start).max(before_lo).min(start);
    let before = zone_values(text, before_lo, start, kind).into_iter().last();
    match (after, before) {
        (Some(a), Some(b)) => {
            if a.0 - end <= start - b.1 {
                Some(a)
            } else {
                Some(b)
            }
        }
        (a, b) => a.or(b),
    }
}

/// Full pipeline for one document; mentions sorted by span start.
pub fn extract(doc: &ReportDocument, lexicon: &ExtractionLexicon) -> Result<Vec<Mention>, ExtractError> {
    let doc = validate_document(doc.clone())?;
    let index = TextIndex::new(&doc.text);
    let mut out: Vec<Mention> = Vec::new();
    match detect_format(&doc, lexicon) {
        ReportFormat::Structured => {
            for seg in segment_structured(&doc, lexicon)? {
                let found = if seg.category.value_kind().is_numeric() {
                    match extract_numeric_body(&index, &seg) {
                        Ok(m) => m,
                        Err(ExtractError::MalformedNumber(_)) => Vec::new(),
                        Err(e) => return Err(e),
                    }
                } else {
                    extract_categorical(&index, &seg, lexicon)?
                };
                out.extend(found);
            }
        }
        ReportFormat::Unstructured => {
            for seg in segment_unstructured(&doc, lexicon) {
                if !seg.category.value_kind().is_numeric() {
                    out.extend(extract_categorical(&index, &seg, lexicon)?);
                }
            }
            for hit in tnm::scan_tnm(&doc.text) {
                out.push(mention(&index, hit.category, hit.start, hit.end, hit.value));
            }
            for category in Category::ALL {
                if category.value_kind().is_numeric() {
                    match scan_key_strings(&index, category, lexicon) {
                        Ok(m) => out.extend(m),
                        Err(ExtractError::MalformedNumber(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    }
    Ok(dedupe(out))
}

/// Sorts by start and drops same-category overlaps, keeping the longer.
fn dedupe(mut mentions: Vec<Mention>) -> Vec<Mention> {
    mentions.sort_by(|a, b| {
        a.span
            .start
            .cmp(&b.span.start)
            .then(b.span.end.cmp(&a.span.end))
            .then(a.category.cmp(&b.category))
    });
    let mut out: Vec<Mention> = Vec::with_capacity(mentions.len());
    for m in mentions {
        if !out
            .iter()
            .any(|k| k.category == m.category && k.span.overlaps(&m.span))
        {
            out.push(m);
        }
    }
    out
}

/// Collapses mentions into one slot per category.
///
/// Numeric slots take the maximum; other slots take the most severe value
/// by lexicon attribute order, the earliest mention breaking ties.
pub fn to_feature_record(
    doc: &ReportDocument,
    mentions: &[Mention],
    lexicon: &ExtractionLexicon,
) -> FeatureRecord {
    let mut record = FeatureRecord::new(doc.id.clone());
    for category in Category::ALL {
        let of: Vec<&Mention> = mentions.iter().filter(|m| m.category == category).collect();
        let chosen = if category.value_kind().is_numeric() {
            of.iter()
                .filter_map(|m| m.value.as_number().map(|n| (n, *m)))
                .fold(None::<(f64, &Mention)>, |best, (n, m)| match best {
                    Some((b, _)) if b >= n => best,
                    _ => Some((n, m)),
                })
                .map(|(_, m)| m)
        } else {
            of.iter()
                .min_by_key(|m| lexicon.rank(category, &m.value).unwrap_or(usize::MAX))
                .copied()
        };
        if let Some(m) = chosen {
            // Values come from the lexicon or the parsers, so kinds line up.
            let _ = record.set(category, m.value.clone());
        }
    }
    record.provenance = mentions.to_vec();
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::default_lexicon;
    use crate::model::FormatHint;
    use crate::segmentation::SegmentStrategy;

    fn seg(text: &str, category: Category, body: &str) -> Segment {
        let start = text.find(body).unwrap();
        Segment {
            category,
            header_span: Span::new(0, 0),
            body_span: Span::new(start, start + body.len()),
            strategy: SegmentStrategy::HeaderBased,
        }
    }

    #[test]
    fn categorical_and_tnm_segments() {
        let lex = default_lexicon();
        let text = "Margins: Involved by carcinoma.";
        let idx = TextIndex::new(text);
        let m = extract_categorical(&idx, &seg(text, Category::Margins, "Involved by carcinoma."), &lex)
            .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].value, AttributeValue::Categorical("Positive".into()));
        assert_eq!(m[0].surface, "Involved by carcinoma");

        let text = "Regional lymph nodes: pN1b.";
        let idx = TextIndex::new(text);
        let m = extract_categorical(&idx, &seg(text, Category::LymphNodesTNM, "pN1b."), &lex).unwrap();
        assert_eq!(m[0].value, AttributeValue::Tnm("N1".into()));
        assert_eq!(m[0].surface, "pN1b");
    }

    #[test]
    fn structured_numeric_body() {
        let text = "Tumor Size: Greatest dimension: 2.8 cm.";
        let idx = TextIndex::new(text);
        let m = extract_numeric_body(&idx, &seg(text, Category::TumorSize, "Greatest dimension: 2.8 cm."))
            .unwrap();
        assert_eq!(m[0].value, AttributeValue::Length(2.8));
        assert_eq!(m[0].surface, "2.8 cm");
        let text = "Tumor Size: Cannot be determined.";
        let idx = TextIndex::new(text);
        assert!(matches!(
            extract_numeric_body(&idx, &seg(text, Category::TumorSize, "Cannot be determined.")),
            Err(ExtractError::MalformedNumber(_))
        ));
    }

    #[test]
    fn gapped_key_string_captures_every_focus() {
        let lex = default_lexicon();
        let text = "papillary thyroid carcinoma, follicular subtype forming two nodules \
                    (0.7 x 0.5 x 0.4 cm and 0.6 x 0.5 x 0.4 cm). Tumor is confined to the thyroid.";
        let idx = TextIndex::new(text);
        let m = scan_key_strings(&idx, Category::TumorSize, &lex).unwrap();
        let v: Vec<_> = m.iter().map(|m| m.value.clone()).collect();
        assert_eq!(v, vec![AttributeValue::Length(0.7), AttributeValue::Length(0.6)]);
    }

    #[test]
    fn literal_key_strings() {
        let lex = default_lexicon();
        let text = "The tumor measuring 12 mm is present.";
        let m = scan_key_strings(&TextIndex::new(text), Category::TumorSize, &lex).unwrap();
        assert_eq!(m[0].value, AttributeValue::Length(1.2));
        let text = "Carcinoma, 2.1 x 1.0 x 0.9 cm in greatest dimension.";
        let m = scan_key_strings(&TextIndex::new(text), Category::TumorSize, &lex).unwrap();
        assert_eq!(m[0].value, AttributeValue::Length(2.1));
        let text = "Number of lymph nodes involved: three. Number of lymph nodes examined: 12.";
        let inv = scan_key_strings(&TextIndex::new(text), Category::NumberOfLymphNodesInvolved, &lex)
            .unwrap();
        assert_eq!(inv[0].value, AttributeValue::Count(3));
        let ex = scan_key_strings(&TextIndex::new(text), Category::NumberOfLymphNodesExamined, &lex)
            .unwrap();
        assert_eq!(ex[0].value, AttributeValue::Count(12));
        let text = "Number involved: none.";
        assert!(matches!(
            scan_key_strings(&TextIndex::new(text), Category::NumberOfLymphNodesInvolved, &lex),
            Err(ExtractError::MalformedNumber(_))
        ));
    }

    #[test]
    fn node_fraction_pattern() {
        let lex = default_lexicon();
        let text = "A single (1 of 3) perithyroidal lymph nodes is positive for metastatic carcinoma.";
        let idx = TextIndex::new(text);
        let inv = scan_key_strings(&idx, Category::NumberOfLymphNodesInvolved, &lex).unwrap();
        let ex = scan_key_strings(&idx, Category::NumberOfLymphNodesExamined, &lex).unwrap();
        assert_eq!((inv[0].surface.as_str(), ex[0].surface.as_str()), ("1", "3"));
    }

    #[test]
    fn conflict_resolution() {
        let lex = default_lexicon();
        let doc = ReportDocument::new("d", "x", FormatHint::Auto);
        let mk = |category, value: AttributeValue, start| Mention {
            category,
            surface: "x".into(),
            span: Span::new(start, start + 1),
            value,
        };
        let ms = vec![
            mk(Category::TumorSize, AttributeValue::Length(0.7), 0),
            mk(Category::TumorSize, AttributeValue::Length(0.6), 1),
            mk(Category::ExtrathyroidalExtension, AttributeValue::Categorical("MicroscopicMinimal".into()), 2),
            mk(Category::ExtrathyroidalExtension, AttributeValue::Categorical("Macroscopic".into()), 3),
            mk(Category::Margins, AttributeValue::Categorical("Negative".into()), 4),
            mk(Category::Margins, AttributeValue::Categorical("Positive".into()), 5),
        ];
        let r = to_feature_record(&doc, &ms, &lex);
        assert_eq!(r.tumor_size(), Some(0.7));
        assert_eq!(r.code(Category::ExtrathyroidalExtension), Some("Macroscopic"));
        assert_eq!(r.code(Category::Margins), Some("Positive"));
        assert_eq!(r.provenance.len(), 6);
    }

    #[test]
    fn unanchored_narrative_is_empty() {
        let lex = default_lexicon();
        let doc = ReportDocument::new("d", "Benign colloid nodule.", FormatHint::Unstructured);
        assert!(extract(&doc, &lex).unwrap().is_empty());
    }
}
