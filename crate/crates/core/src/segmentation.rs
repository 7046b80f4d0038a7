//! Splitting reports into category-anchored regions.
//!
//! Synoptic reports are cut at header lines; narrative reports are anchored
//! on every header keyword or distinctive attribute surface, with a window
//! running to the end of the sentence.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::lexicon::ExtractionLexicon;
use crate::model::{Category, FormatHint, ReportDocument, ReportFormat, Span, TextIndex};

/// Distinct headers followed by ":" needed to call a report structured.
pub const STRUCTURED_HEADER_THRESHOLD: usize = 6;

/// Tokens that may precede a "." without ending the sentence.
const UNIT_TOKENS: [&str; 2] = ["cm", "mm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentStrategy {
    HeaderBased,
    TopicAnchored,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub category: Category,
    pub header_span: Span,
    pub body_span: Span,
    pub strategy: SegmentStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("no synoptic headers found")]
    NoHeadersFound,
}

/// Resolves the document layout; an explicit hint wins over detection.
pub fn detect_format(doc: &ReportDocument, lexicon: &ExtractionLexicon) -> ReportFormat {
    match doc.format_hint {
        FormatHint::Structured => ReportFormat::Structured,
        FormatHint::Unstructured => ReportFormat::Unstructured,
        FormatHint::Auto => {
            if looks_structured(&doc.text, lexicon) {
                ReportFormat::Structured
            } else {
                ReportFormat::Unstructured
            }
        }
    }
}

/// Detection heuristic behind [`detect_format`].
pub fn looks_structured(text: &str, lexicon: &ExtractionLexicon) -> bool {
    if text.to_lowercase().contains("synoptic report") {
        return true;
    }
    let mut seen = BTreeSet::new();
    for h in lexicon.find_headers(text) {
        if header_terminator(&text[h.end..]).is_some_and(|t| t.colon) {
            seen.insert(h.category);
        }
    }
    seen.len() >= STRUCTURED_HEADER_THRESHOLD
}

struct Terminator {
    colon: bool,
    /// Byte offset (relative) where the body begins.
    body_offset: usize,
}

/// Inspects the text right after a header keyword (same line only).
/// Accepts `: …`, `(…): …` and a bare trailing parenthetical `(…)`.
fn header_terminator(after: &str) -> Option<Terminator> {
    let line_end = after.find('\n').unwrap_or(after.len());
    let line = &after[..line_end];
    let skip_ws = |from: usize| {
        from + line[from..]
            .find(|c: char| c != ' ' && c != '\t')
            .unwrap_or(line.len() - from)
    };
    let mut pos = skip_ws(0);
    let mut paren_start = None;
    if line[pos..].starts_with('(') {
        let close = line[pos..].find(')')?;
        paren_start = Some(pos);
        pos = skip_ws(pos + close + 1);
    }
    if line[pos..].starts_with(':') {
        return Some(Terminator {
            colon: true,
            body_offset: pos + 1,
        });
    }
    match paren_start {
        Some(p) if line[pos..].trim().is_empty() => Some(Terminator {
            colon: false,
            body_offset: p,
        }),
        _ => None,
    }
}

fn trim_range(text: &str, start: usize, end: usize) -> (usize, usize) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead == slice.len() {
        (start, start)
    } else {
        (start + lead, end - trail)
    }
}

/// Byte offset of the first blank line at or after `from`, else text end.
fn paragraph_end(text: &str, from: usize) -> usize {
    // A partial first line never counts as blank.
    let at_line_start = from == 0 || text.as_bytes()[from - 1] == b'\n';
    let mut pos = from;
    for line in text[from..].split_inclusive('\n') {
        if (pos > from || at_line_start) && line.trim().is_empty() {
            return pos;
        }
        pos += line.len();
    }
    text.len()
}

/// Header-based segmentation for synoptic reports.
pub fn segment_structured(
    doc: &ReportDocument,
    lexicon: &ExtractionLexicon,
) -> Result<Vec<Segment>, SegmentError> {
    let text = doc.text.as_str();
    // (category, header bytes, body start, line start, line end)
    let mut headers: Vec<(Category, usize, usize, usize, usize, usize)> = Vec::new();
    let mut line_start = 0;
    for raw in text.split_inclusive('\n') {
        let content = raw.trim_end_matches(['\n', '\r']);
        let lead = content.len() - content.trim_start().len();
        let rest = &content[lead..];
        if let Some(h) = lexicon.header_at_start(rest) {
            if let Some(t) = header_terminator(&rest[h.end..]) {
                let header_start = line_start + lead;
                let header_end = header_start + h.end;
                headers.push((
                    h.category,
                    header_start,
                    header_end,
                    header_end + t.body_offset,
                    line_start,
                    line_start + raw.len(),
                ));
            }
        }
        line_start += raw.len();
    }
    if headers.is_empty() {
        return Err(SegmentError::NoHeadersFound);
    }
    let index = TextIndex::new(text);
    let mut out = Vec::with_capacity(headers.len());
    for (i, &(category, h_start, h_end, body_start, _, line_end)) in headers.iter().enumerate() {
        let limit = match headers.get(i + 1) {
            Some(next) => next.4,
            None => paragraph_end(text, line_end),
        };
        let limit = limit.max(body_start);
        let (b_start, b_end) = trim_range(text, body_start, limit);
        out.push(Segment {
            category,
            header_span: index.span_of_bytes(h_start, h_end),
            body_span: index.span_of_bytes(b_start, b_end),
            strategy: SegmentStrategy::HeaderBased,
        });
    }
    Ok(out)
}

fn is_terminator(text: &str, dot: usize) -> bool {
    let after = text[dot + 1..].chars().next();
    if !after.is_none_or(char::is_whitespace) {
        return false;
    }
    let before = &text[..dot];
    let word_start = before
        .rfind(|c: char| !c.is_alphabetic())
        .map(|p| p + before[p..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = before[word_start..].to_ascii_lowercase();
    !UNIT_TOKENS.contains(&word.as_str())
}

/// End (exclusive, byte offset of the ".") of the sentence containing
/// `from`. Also stops at a blank line.
pub(crate) fn sentence_end(text: &str, from: usize) -> usize {
    let para = paragraph_end(text, from);
    let mut search = from;
    while let Some(rel) = text[search..para].find('.') {
        let dot = search + rel;
        if is_terminator(text, dot) {
            return dot;
        }
        search = dot + 1;
    }
    para
}

/// Start of the sentence containing the byte offset `before`.
pub(crate) fn sentence_start(text: &str, before: usize) -> usize {
    let head = &text[..before];
    let mut cut = 0;
    if let Some(p) = head.rfind("\n\n") {
        cut = p + 2;
    }
    let mut search_end = before;
    while let Some(dot) = text[cut..search_end].rfind('.') {
        let dot = cut + dot;
        if is_terminator(text, dot) {
            return dot + 1;
        }
        search_end = dot;
    }
    cut
}

/// Topic segmentation for narrative reports.
pub fn segment_unstructured(doc: &ReportDocument, lexicon: &ExtractionLexicon) -> Vec<Segment> {
    let text = doc.text.as_str();
    let index = TextIndex::new(text);
    let headers = lexicon.find_headers(text);
    let anchors = lexicon.find_anchor_surfaces(text);
    let next_header_after = |pos: usize| {
        headers
            .iter()
            .find(|h| h.start >= pos)
            .map_or(text.len(), |h| h.start)
    };
    let mut out = Vec::new();
    for h in &headers {
        let end = sentence_end(text, h.end).min(next_header_after(h.end));
        let (b_start, b_end) = trim_range(text, h.end, end.max(h.end));
        out.push(Segment {
            category: h.category,
            header_span: index.span_of_bytes(h.start, h.end),
            body_span: index.span_of_bytes(b_start, b_end),
            strategy: SegmentStrategy::TopicAnchored,
        });
    }
    for a in &anchors {
        let end = sentence_end(text, a.start)
            .min(next_header_after(a.end))
            .max(a.end);
        out.push(Segment {
            category: a.category,
            header_span: index.span_of_bytes(a.start, a.end),
            body_span: index.span_of_bytes(a.start, end),
            strategy: SegmentStrategy::TopicAnchored,
        });
    }
    out.sort_by_key(|s| (s.header_span.start, s.category, s.body_span.end));
    out.dedup();
    out
}
