//! Core domain types shared by the whole pipeline.
//!
//! Everything here is immutable once constructed. Character spans are
//! half-open `[start, end)` intervals over Unicode scalar positions of the
//! source text, never byte offsets.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("document text is empty")]
    EmptyText,
    #[error("document id is empty")]
    EmptyId,
    #[error("span [{start}, {end}) is out of range for text of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("surface {surface:?} does not match text {found:?} at [{start}, {end})")]
    SurfaceMismatch {
        surface: String,
        found: String,
        start: usize,
        end: usize,
    },
    #[error("invalid length {0} cm")]
    InvalidLength(f64),
    #[error("invalid TNM code {0:?}")]
    InvalidTnm(String),
    #[error("invalid staging edition {0}")]
    InvalidStaging(u8),
    #[error("value {value} is not a {expected:?} value (category {category})")]
    ValueKindMismatch {
        category: Category,
        expected: ValueKind,
        value: String,
    },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("unknown risk category {0:?}")]
    UnknownRisk(String),
}

/// How the report text should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatHint {
    Structured,
    Unstructured,
    #[default]
    Auto,
}

/// Resolved report layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Structured,
    Unstructured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub id: String,
    pub text: String,
    #[serde(rename = "format", default)]
    pub format_hint: FormatHint,
}

impl ReportDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>, format_hint: FormatHint) -> Self {
        ReportDocument {
            id: id.into(),
            text: text.into(),
            format_hint,
        }
    }
}

/// Returns the document unchanged iff its invariants hold.
pub fn validate_document(doc: ReportDocument) -> Result<ReportDocument, ModelError> {
    if doc.id.is_empty() {
        return Err(ModelError::EmptyId);
    }
    if doc.text.is_empty() {
        return Err(ModelError::EmptyText);
    }
    Ok(doc)
}

/// The kind of value a category carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Categorical,
    Length,
    Count,
    Tnm,
    Staging,
}

impl ValueKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueKind::Length | ValueKind::Count)
    }
}

/// The eighteen pathology feature categories, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Procedure,
    TumorFocality,
    TumorSite,
    TumorSize,
    HistologicSubtype,
    Margins,
    Angioinvasion,
    LymphaticInvasion,
    LymphovascularInvasion,
    ExtrathyroidalExtension,
    NumberOfLymphNodesInvolved,
    NumberOfLymphNodesExamined,
    SizeOfLargestMetastaticDeposit,
    ExtranodalExtension,
    PathologicStaging,
    PrimaryTumorTNM,
    LymphNodesTNM,
    DistantMetastasis,
}

impl Category {
    pub const COUNT: usize = 18;

    pub const ALL: [Category; Category::COUNT] = [
        Category::Procedure,
        Category::TumorFocality,
        Category::TumorSite,
        Category::TumorSize,
        Category::HistologicSubtype,
        Category::Margins,
        Category::Angioinvasion,
        Category::LymphaticInvasion,
        Category::LymphovascularInvasion,
        Category::ExtrathyroidalExtension,
        Category::NumberOfLymphNodesInvolved,
        Category::NumberOfLymphNodesExamined,
        Category::SizeOfLargestMetastaticDeposit,
        Category::ExtranodalExtension,
        Category::PathologicStaging,
        Category::PrimaryTumorTNM,
        Category::LymphNodesTNM,
        Category::DistantMetastasis,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical identifier used in config and gold files.
    pub fn name(self) -> &'static str {
        match self {
            Category::Procedure => "Procedure",
            Category::TumorFocality => "TumorFocality",
            Category::TumorSite => "TumorSite",
            Category::TumorSize => "TumorSize",
            Category::HistologicSubtype => "HistologicSubtype",
            Category::Margins => "Margins",
            Category::Angioinvasion => "Angioinvasion",
            Category::LymphaticInvasion => "LymphaticInvasion",
            Category::LymphovascularInvasion => "LymphovascularInvasion",
            Category::ExtrathyroidalExtension => "ExtrathyroidalExtension",
            Category::NumberOfLymphNodesInvolved => "NumberOfLymphNodesInvolved",
            Category::NumberOfLymphNodesExamined => "NumberOfLymphNodesExamined",
            Category::SizeOfLargestMetastaticDeposit => "SizeOfLargestMetastaticDeposit",
            Category::ExtranodalExtension => "ExtranodalExtension",
            Category::PathologicStaging => "PathologicStaging",
            Category::PrimaryTumorTNM => "PrimaryTumorTNM",
            Category::LymphNodesTNM => "LymphNodesTNM",
            Category::DistantMetastasis => "DistantMetastasis",
        }
    }

    /// Human-readable column header.
    pub fn display_name(self) -> &'static str {
        match self {
            Category::Procedure => "Procedure",
            Category::TumorFocality => "Tumor Focality",
            Category::TumorSite => "Tumor Site",
            Category::TumorSize => "Tumor Size",
            Category::HistologicSubtype => "Histologic Subtype",
            Category::Margins => "Margins",
            Category::Angioinvasion => "Angioinvasion",
            Category::LymphaticInvasion => "Lymphatic Invasion",
            Category::LymphovascularInvasion => "Lymphovascular Invasion",
            Category::ExtrathyroidalExtension => "Extrathyroidal Extension",
            Category::NumberOfLymphNodesInvolved => "Number of lymph nodes involved",
            Category::NumberOfLymphNodesExamined => "Number of lymph nodes examined",
            Category::SizeOfLargestMetastaticDeposit => "Size of largest metastatic deposit",
            Category::ExtranodalExtension => "Extranodal Extension",
            Category::PathologicStaging => "Pathologic Staging",
            Category::PrimaryTumorTNM => "Primary Tumor TNM",
            Category::LymphNodesTNM => "Lymph Nodes TNM",
            Category::DistantMetastasis => "Distant Metastasis",
        }
    }

    pub fn from_name(name: &str) -> Result<Category, ModelError> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| ModelError::UnknownCategory(name.to_string()))
    }

    pub fn value_kind(self) -> ValueKind {
        match self {
            Category::TumorSize | Category::SizeOfLargestMetastaticDeposit => ValueKind::Length,
            Category::NumberOfLymphNodesInvolved | Category::NumberOfLymphNodesExamined => {
                ValueKind::Count
            }
            Category::PrimaryTumorTNM | Category::LymphNodesTNM | Category::DistantMetastasis => {
                ValueKind::Tnm
            }
            Category::PathologicStaging => ValueKind::Staging,
            _ => ValueKind::Categorical,
        }
    }

    /// Lymphovascular invasion is only ever reported in narrative reports.
    pub fn is_unstructured_only(self) -> bool {
        self == Category::LymphovascularInvasion
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Upper sanity bound for any length, in cm.
pub const MAX_LENGTH_CM: f64 = 100.0;

/// Lengths are snapped to this resolution (1 µm) so that values reached by
/// different unit paths compare equal.
const LENGTH_RESOLUTION: f64 = 1e4;

const TNM_CODES: [&str; 11] = [
    "T0", "T1", "T2", "T3", "T4", "NX", "N0", "N1", "MX", "M0", "M1",
];

/// A normalized attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Categorical(String),
    /// Centimetres.
    Length(f64),
    Count(u32),
    Tnm(String),
    /// AJCC edition, 7 or 8.
    Staging(u8),
}

impl AttributeValue {
    pub fn length_cm(cm: f64) -> Result<AttributeValue, ModelError> {
        if !cm.is_finite() || !(0.0..MAX_LENGTH_CM).contains(&cm) {
            return Err(ModelError::InvalidLength(cm));
        }
        Ok(AttributeValue::Length(
            (cm * LENGTH_RESOLUTION).round() / LENGTH_RESOLUTION,
        ))
    }

    pub fn length_mm(mm: f64) -> Result<AttributeValue, ModelError> {
        AttributeValue::length_cm(mm / 10.0)
    }

    pub fn tnm(code: &str) -> Result<AttributeValue, ModelError> {
        let upper = code.trim().to_ascii_uppercase();
        if TNM_CODES.contains(&upper.as_str()) {
            Ok(AttributeValue::Tnm(upper))
        } else {
            Err(ModelError::InvalidTnm(code.to_string()))
        }
    }

    pub fn staging(edition: u8) -> Result<AttributeValue, ModelError> {
        match edition {
            7 | 8 => Ok(AttributeValue::Staging(edition)),
            other => Err(ModelError::InvalidStaging(other)),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Categorical(_) => ValueKind::Categorical,
            AttributeValue::Length(_) => ValueKind::Length,
            AttributeValue::Count(_) => ValueKind::Count,
            AttributeValue::Tnm(_) => ValueKind::Tnm,
            AttributeValue::Staging(_) => ValueKind::Staging,
        }
    }

    pub fn as_length(&self) -> Option<f64> {
        match self {
            AttributeValue::Length(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_count(&self) -> Option<u32> {
        match self {
            AttributeValue::Count(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical string for categorical and TNM values.
    pub fn as_code(&self) -> Option<&str> {
        match self {
            AttributeValue::Categorical(s) | AttributeValue::Tnm(s) => Some(s),
            _ => None,
        }
    }

    /// Numeric view used by range predicates.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttributeValue::Length(v) => Some(*v),
            AttributeValue::Count(v) => Some(f64::from(*v)),
            _ => None,
        }
    }

    /// Parse the wire/plain-text rendering of a value for `category`.
    pub fn parse_for(category: Category, raw: &str) -> Result<AttributeValue, ModelError> {
        let raw = raw.trim();
        let mismatch = || ModelError::ValueKindMismatch {
            category,
            expected: category.value_kind(),
            value: raw.to_string(),
        };
        match category.value_kind() {
            ValueKind::Categorical => {
                if raw.is_empty() {
                    Err(mismatch())
                } else {
                    Ok(AttributeValue::Categorical(raw.to_string()))
                }
            }
            ValueKind::Length => {
                let v: f64 = raw
                    .trim_end_matches("cm")
                    .trim()
                    .parse()
                    .map_err(|_| mismatch())?;
                AttributeValue::length_cm(v)
            }
            ValueKind::Count => raw.parse().map(AttributeValue::Count).map_err(|_| mismatch()),
            ValueKind::Tnm => AttributeValue::tnm(raw),
            ValueKind::Staging => {
                let digits: String = raw.chars().take_while(|c| c.is_ascii_digit()).collect();
                let edition: u8 = digits.parse().map_err(|_| mismatch())?;
                AttributeValue::staging(edition)
            }
        }
    }

    /// JSON rendering used by gold and mention files: numbers for lengths,
    /// counts and editions, strings otherwise.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            AttributeValue::Categorical(s) | AttributeValue::Tnm(s) => s.clone().into(),
            AttributeValue::Length(v) => serde_json::json!(*v),
            AttributeValue::Count(v) => (*v).into(),
            AttributeValue::Staging(e) => (*e).into(),
        }
    }

    pub fn from_json(
        category: Category,
        value: &serde_json::Value,
    ) -> Result<AttributeValue, ModelError> {
        match value {
            serde_json::Value::String(s) => AttributeValue::parse_for(category, s),
            serde_json::Value::Number(n) => AttributeValue::parse_for(category, &n.to_string()),
            other => Err(ModelError::ValueKindMismatch {
                category,
                expected: category.value_kind(),
                value: other.to_string(),
            }),
        }
    }

    pub fn matches_kind(&self, category: Category) -> bool {
        self.kind() == category.value_kind()
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeValue::Categorical(s) | AttributeValue::Tnm(s) => f.write_str(s),
            AttributeValue::Length(v) => write!(f, "{}", format_number(*v)),
            AttributeValue::Count(v) => write!(f, "{v}"),
            AttributeValue::Staging(e) => write!(f, "{e}th edition"),
        }
    }
}

/// Shortest decimal rendering: `3.0` prints as `3`, `2.8` as `2.8`.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Half-open character interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Span {
        debug_assert!(start <= end, "span start after end");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Sum of boundary displacements.
    pub fn distance(&self, other: &Span) -> usize {
        self.start.abs_diff(other.start) + self.end.abs_diff(other.end)
    }
}

/// Maps between byte offsets and character positions of one text.
#[derive(Debug, Clone)]
pub struct TextIndex<'a> {
    text: &'a str,
    /// Byte offset of every char boundary, with `text.len()` appended.
    /// Empty when the text is pure ASCII.
    boundaries: Vec<usize>,
}

impl<'a> TextIndex<'a> {
    pub fn new(text: &'a str) -> TextIndex<'a> {
        let boundaries = if text.is_ascii() {
            Vec::new()
        } else {
            text.char_indices()
                .map(|(b, _)| b)
                .chain(std::iter::once(text.len()))
                .collect()
        };
        TextIndex { text, boundaries }
    }

    pub fn text(&self) -> &'a str {
        self.text
    }

    pub fn char_len(&self) -> usize {
        if self.boundaries.is_empty() {
            self.text.len()
        } else {
            self.boundaries.len() - 1
        }
    }

    /// Character position of a byte offset lying on a char boundary.
    pub fn to_char(&self, byte: usize) -> usize {
        if self.boundaries.is_empty() {
            byte
        } else {
            self.boundaries
                .binary_search(&byte)
                .expect("byte offset not on a char boundary")
        }
    }

    pub fn to_byte(&self, ch: usize) -> usize {
        if self.boundaries.is_empty() {
            ch
        } else {
            self.boundaries[ch]
        }
    }

    pub fn span_of_bytes(&self, start: usize, end: usize) -> Span {
        Span::new(self.to_char(start), self.to_char(end))
    }

    pub fn byte_range(&self, span: Span) -> std::ops::Range<usize> {
        self.to_byte(span.start)..self.to_byte(span.end)
    }

    pub fn slice(&self, span: Span) -> Option<&'a str> {
        if span.start > span.end || span.end > self.char_len() {
            return None;
        }
        Some(&self.text[self.byte_range(span)])
    }
}

/// Character-indexed slice of `text`.
pub fn slice_chars(text: &str, span: Span) -> Option<&str> {
    TextIndex::new(text).slice(span)
}

/// One extracted or annotated entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub category: Category,
    pub surface: String,
    pub span: Span,
    pub value: AttributeValue,
}

impl Mention {
    /// Checks span bounds, surface/slice agreement and value kind.
    pub fn validate(&self, index: &TextIndex<'_>) -> Result<(), ModelError> {
        let len = index.char_len();
        if self.span.start >= self.span.end || self.span.end > len {
            return Err(ModelError::SpanOutOfRange {
                start: self.span.start,
                end: self.span.end,
                len,
            });
        }
        let found = index.slice(self.span).unwrap_or_default();
        if found != self.surface {
            return Err(ModelError::SurfaceMismatch {
                surface: self.surface.clone(),
                found: found.to_string(),
                start: self.span.start,
                end: self.span.end,
            });
        }
        if !self.value.matches_kind(self.category) {
            return Err(ModelError::ValueKindMismatch {
                category: self.category,
                expected: self.category.value_kind(),
                value: self.value.to_string(),
            });
        }
        Ok(())
    }

    pub fn validate_against(&self, text: &str) -> Result<(), ModelError> {
        self.validate(&TextIndex::new(text))
    }
}

/// Mentions for one document, as produced by the extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentMentions {
    pub doc_id: String,
    pub mentions: Vec<Mention>,
}

/// Consensus reference annotation for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldAnnotation {
    pub doc_id: String,
    pub mentions: Vec<Mention>,
    pub risk: Option<RiskCategory>,
}

impl GoldAnnotation {
    pub fn validate_against(&self, doc: &ReportDocument) -> Result<(), ModelError> {
        let index = TextIndex::new(&doc.text);
        self.mentions.iter().try_for_each(|m| m.validate(&index))
    }
}

/// Per-report feature row: one optional slot per category.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureRecord {
    pub doc_id: String,
    slots: [Option<AttributeValue>; Category::COUNT],
    pub provenance: Vec<Mention>,
}

impl FeatureRecord {
    pub fn new(doc_id: impl Into<String>) -> FeatureRecord {
        FeatureRecord {
            doc_id: doc_id.into(),
            ..FeatureRecord::default()
        }
    }

    pub fn get(&self, category: Category) -> Option<&AttributeValue> {
        self.slots[category.index()].as_ref()
    }

    /// Stores a value; rejects values of the wrong kind.
    pub fn set(&mut self, category: Category, value: AttributeValue) -> Result<(), ModelError> {
        if !value.matches_kind(category) {
            return Err(ModelError::ValueKindMismatch {
                category,
                expected: category.value_kind(),
                value: value.to_string(),
            });
        }
        self.slots[category.index()] = Some(value);
        Ok(())
    }

    pub fn with(mut self, category: Category, value: AttributeValue) -> FeatureRecord {
        self.set(category, value)
            .expect("value kind must match category");
        self
    }

    pub fn clear(&mut self, category: Category) {
        self.slots[category.index()] = None;
    }

    pub fn is_populated(&self, category: Category) -> bool {
        self.slots[category.index()].is_some()
    }

    pub fn code(&self, category: Category) -> Option<&str> {
        self.get(category).and_then(AttributeValue::as_code)
    }

    pub fn number(&self, category: Category) -> Option<f64> {
        self.get(category).and_then(AttributeValue::as_number)
    }

    pub fn tumor_size(&self) -> Option<f64> {
        self.get(Category::TumorSize).and_then(AttributeValue::as_length)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, Option<&AttributeValue>)> + '_ {
        Category::ALL.iter().map(move |&c| (c, self.get(c)))
    }
}

/// Recurrence-risk tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCategory {
    VeryLow,
    Low,
    Intermediate,
    High,
}

impl RiskCategory {
    /// Matrix order: most severe first.
    pub const DESCENDING: [RiskCategory; 4] = [
        RiskCategory::High,
        RiskCategory::Intermediate,
        RiskCategory::Low,
        RiskCategory::VeryLow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskCategory::VeryLow => "very_low",
            RiskCategory::Low => "low",
            RiskCategory::Intermediate => "intermediate",
            RiskCategory::High => "high",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskCategory::VeryLow => "Very low risk",
            RiskCategory::Low => "Low risk",
            RiskCategory::Intermediate => "Intermediate risk",
            RiskCategory::High => "High risk",
        }
    }

    /// Row/column index in a confusion matrix.
    pub fn matrix_index(self) -> usize {
        3 - self as usize
    }

    pub fn parse(s: &str) -> Result<RiskCategory, ModelError> {
        match s {
            "very_low" => Ok(RiskCategory::VeryLow),
            "low" => Ok(RiskCategory::Low),
            "intermediate" => Ok(RiskCategory::Intermediate),
            "high" => Ok(RiskCategory::High),
            other => Err(ModelError::UnknownRisk(other.to_string())),
        }
    }
}

impl fmt::Display for RiskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One fired rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub rule_id: String,
    pub tier: RiskCategory,
    pub category: Category,
    pub value: AttributeValue,
    /// e.g. `"H2: deposit 5.5 > 3"`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskAssignment {
    pub risk: RiskCategory,
    pub triggers: Vec<Trigger>,
}

impl RiskAssignment {
    pub fn very_low() -> RiskAssignment {
        RiskAssignment {
            risk: RiskCategory::VeryLow,
            triggers: Vec::new(),
        }
    }

    /// Upholds: VeryLow has no triggers; every other tier has at least one,
    /// all from that tier.
    pub fn is_consistent(&self) -> bool {
        match self.risk {
            RiskCategory::VeryLow => self.triggers.is_empty(),
            tier => !self.triggers.is_empty() && self.triggers.iter().all(|t| t.tier == tier),
        }
    }
}
