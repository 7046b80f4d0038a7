//! Extraction vocabulary: header keywords, attribute surfaces, numeric key
//! strings.
//!
//! A lexicon is loaded from JSON (see `docs/lexicon.md`) and compiled once
//! into regex matchers. Equality compares the vocabulary only, never the
//! compiled form.

mod matcher;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{numeric, tnm};
use crate::model::{AttributeValue, Category, ValueKind};

pub use matcher::{normalize_phrase, PhraseMatch};
use matcher::{leftmost_longest, Phrase};

/// The shipped default configuration (vocabulary plus rule ledger).
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default_lexicon.json");

/// Literal marking the wildcard of a gapped key string.
pub const WILDCARD: &str = "[...]";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LexiconError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("category {0} is missing")]
    MissingCategory(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("duplicate canonical value {value:?} in {category}")]
    DuplicateCanonical { category: Category, value: String },
    #[error("key strings may not target {0}: only numeric categories carry key strings")]
    BadKeyStringTarget(String),
    #[error("{category} declares value kind {declared:?}, expected {expected:?}")]
    ValueKindMismatch {
        category: Category,
        declared: ValueKind,
        expected: ValueKind,
    },
    #[error("{0} has no header keywords")]
    NoHeaderKeywords(Category),
    #[error("{0} needs at least one attribute")]
    NoAttributes(Category),
    #[error("empty surface or keyword in {0}")]
    EmptyPhrase(Category),
    #[error("canonical value {value:?} is not valid for {category}")]
    InvalidCanonical { category: Category, value: String },
    #[error("aggressive histology {0:?} is not a HistologicSubtype value")]
    UnknownAggressiveHistology(String),
    #[error("bad key string {template:?} for {category}")]
    BadTemplate { category: Category, template: String },
    #[error("bad pattern {pattern:?} for {category}: {message}")]
    BadPattern {
        category: Category,
        pattern: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributePattern {
    pub canonical: String,
    pub surfaces: Vec<String>,
    /// Deployment additions beyond the reference dictionary.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extension_surfaces: Vec<String>,
}

impl AttributePattern {
    pub fn all_surfaces(&self) -> impl Iterator<Item = &str> {
        self.surfaces
            .iter()
            .chain(&self.extension_surfaces)
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryEntry {
    pub category: Category,
    pub value_kind: ValueKind,
    pub header_keywords: Vec<String>,
    /// Ordered by severity, most severe first.
    pub attributes: Vec<AttributePattern>,
}

/// An anchor phrase, optionally with one wildcard segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyTemplate {
    Literal(String),
    Gapped { prefix: String, suffix: String },
}

impl KeyTemplate {
    pub fn parse(raw: &str) -> Option<KeyTemplate> {
        let parts: Vec<&str> = raw.split(WILDCARD).collect();
        match parts.as_slice() {
            [lit] if !lit.trim().is_empty() => Some(KeyTemplate::Literal(lit.trim().to_string())),
            [prefix, suffix] if !prefix.trim().is_empty() && !suffix.trim().is_empty() => {
                Some(KeyTemplate::Gapped {
                    prefix: prefix.trim().to_string(),
                    suffix: suffix.trim().to_string(),
                })
            }
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            KeyTemplate::Literal(s) => s.clone(),
            KeyTemplate::Gapped { prefix, suffix } => format!("{prefix} {WILDCARD} {suffix}"),
        }
    }
}

/// A raw regex whose capture group holds the number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapturePattern {
    pub pattern: String,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyStringSet {
    pub category: Category,
    pub key_strings: Vec<KeyTemplate>,
    pub extension_key_strings: Vec<KeyTemplate>,
    pub extension_patterns: Vec<CapturePattern>,
}

impl KeyStringSet {
    /// Templates in precedence order.
    pub fn templates(&self) -> impl Iterator<Item = &KeyTemplate> {
        self.key_strings.iter().chain(&self.extension_key_strings)
    }
}

#[derive(Debug)]
pub(crate) struct CompiledTemplate {
    pub prefix: Regex,
    pub suffix: Option<Regex>,
}

#[derive(Debug)]
struct Compiled {
    attributes: Vec<Vec<(Phrase, usize)>>,
    headers: Vec<Vec<Phrase>>,
    anchors: Vec<(Category, usize, Phrase)>,
    templates: Vec<Vec<CompiledTemplate>>,
    patterns: Vec<Vec<(Regex, usize)>>,
}

/// Immutable, shareable vocabulary.
#[derive(Debug, Clone)]
pub struct ExtractionLexicon {
    entries: Vec<CategoryEntry>,
    key_string_sets: Vec<KeyStringSet>,
    aggressive_histologies: BTreeSet<String>,
    compiled: Arc<Compiled>,
}

impl PartialEq for ExtractionLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.key_string_sets == other.key_string_sets
            && self.aggressive_histologies == other.aggressive_histologies
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconConfig {
    categories: BTreeMap<String, CategoryConfig>,
    #[serde(default)]
    key_strings: BTreeMap<String, KeyStringConfig>,
    #[serde(default)]
    aggressive_histologies: Vec<String>,
    /// Owned by the classifier; accepted here so both can share one file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rules: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryConfig {
    value_kind: ValueKind,
    header_keywords: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attributes: Vec<AttributePattern>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyStringConfig {
    key_strings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extension_key_strings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extension_patterns: Vec<CapturePattern>,
}

/// Parses and validates a JSON lexicon config.
pub fn load_lexicon(source: &str) -> Result<ExtractionLexicon, LexiconError> {
    let config: LexiconConfig =
        serde_json::from_str(source).map_err(|e| LexiconError::ParseError {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    ExtractionLexicon::from_config(config)
}

/// The built-in lexicon.
pub fn default_lexicon() -> ExtractionLexicon {
    load_lexicon(DEFAULT_CONFIG).expect("shipped lexicon is valid")
}

fn parse_templates(category: Category, raw: &[String]) -> Result<Vec<KeyTemplate>, LexiconError> {
    raw.iter()
        .map(|t| {
            KeyTemplate::parse(t).ok_or_else(|| LexiconError::BadTemplate {
                category,
                template: t.clone(),
            })
        })
        .collect()
}

fn canonical_value(category: Category, canonical: &str) -> Result<AttributeValue, LexiconError> {
    let invalid = || LexiconError::InvalidCanonical {
        category,
        value: canonical.to_string(),
    };
    match category.value_kind() {
        ValueKind::Categorical => Ok(AttributeValue::Categorical(canonical.to_string())),
        ValueKind::Tnm => {
            let v = AttributeValue::tnm(canonical).map_err(|_| invalid())?;
            let letter = match category {
                Category::PrimaryTumorTNM => "T",
                Category::LymphNodesTNM => "N",
                _ => "M",
            };
            if v.as_code().is_some_and(|c| c.starts_with(letter)) {
                Ok(v)
            } else {
                Err(invalid())
            }
        }
        ValueKind::Staging => AttributeValue::parse_for(category, canonical).map_err(|_| invalid()),
        ValueKind::Length | ValueKind::Count => Err(invalid()),
    }
}

impl ExtractionLexicon {
    fn from_config(config: LexiconConfig) -> Result<ExtractionLexicon, LexiconError> {
        let mut by_category: BTreeMap<Category, CategoryConfig> = BTreeMap::new();
        for (name, entry) in config.categories {
            let category = Category::from_name(&name)
                .map_err(|_| LexiconError::UnknownCategory(name.clone()))?;
            by_category.insert(category, entry);
        }
        let mut entries = Vec::with_capacity(Category::COUNT);
        for category in Category::ALL {
            let cfg = by_category
                .remove(&category)
                .ok_or_else(|| LexiconError::MissingCategory(category.name().to_string()))?;
            entries.push(CategoryEntry {
                category,
                value_kind: cfg.value_kind,
                header_keywords: cfg.header_keywords,
                attributes: cfg.attributes,
            });
        }
        let mut key_string_sets = Vec::new();
        for (name, ks) in config.key_strings {
            let category = Category::from_name(&name)
                .map_err(|_| LexiconError::UnknownCategory(name.clone()))?;
            if !category.value_kind().is_numeric() {
                return Err(LexiconError::BadKeyStringTarget(name));
            }
            key_string_sets.push(KeyStringSet {
                category,
                key_strings: parse_templates(category, &ks.key_strings)?,
                extension_key_strings: parse_templates(category, &ks.extension_key_strings)?,
                extension_patterns: ks.extension_patterns,
            });
        }
        let aggressive = config.aggressive_histologies.into_iter().collect();
        ExtractionLexicon::new(entries, key_string_sets, aggressive)
    }

    /// Validates and compiles a lexicon built in code. `entries` must hold
    /// one entry per category.
    pub fn new(
        mut entries: Vec<CategoryEntry>,
        mut key_string_sets: Vec<KeyStringSet>,
        aggressive_histologies: BTreeSet<String>,
    ) -> Result<ExtractionLexicon, LexiconError> {
        entries.sort_by_key(|e| e.category);
        for category in Category::ALL {
            if !entries.iter().any(|e| e.category == category) {
                return Err(LexiconError::MissingCategory(category.name().to_string()));
            }
        }
        if entries.len() != Category::COUNT {
            let dup = entries
                .windows(2)
                .find(|w| w[0].category == w[1].category)
                .map(|w| w[0].category.name().to_string())
                .unwrap_or_default();
            return Err(LexiconError::UnknownCategory(dup));
        }
        for entry in &entries {
            validate_entry(entry)?;
        }
        key_string_sets.sort_by_key(|k| k.category);
        for ks in &key_string_sets {
            if !ks.category.value_kind().is_numeric() {
                return Err(LexiconError::BadKeyStringTarget(ks.category.name().to_string()));
            }
        }
        let subtypes = &entries[Category::HistologicSubtype.index()];
        for value in &aggressive_histologies {
            if !subtypes.attributes.iter().any(|a| &a.canonical == value) {
                return Err(LexiconError::UnknownAggressiveHistology(value.clone()));
            }
        }
        let compiled = compile(&entries, &key_string_sets)?;
        Ok(ExtractionLexicon {
            entries,
            key_string_sets,
            aggressive_histologies,
            compiled: Arc::new(compiled),
        })
    }

    pub fn entries(&self) -> &[CategoryEntry] {
        &self.entries
    }

    pub fn entry(&self, category: Category) -> &CategoryEntry {
        &self.entries[category.index()]
    }

    pub fn key_strings(&self, category: Category) -> Option<&KeyStringSet> {
        self.key_string_sets.iter().find(|k| k.category == category)
    }

    pub fn key_string_sets(&self) -> &[KeyStringSet] {
        &self.key_string_sets
    }

    pub fn aggressive_histologies(&self) -> &BTreeSet<String> {
        &self.aggressive_histologies
    }

    /// Canonical value of attribute `index` of `category`.
    pub fn attribute_value(&self, category: Category, index: usize) -> AttributeValue {
        canonical_value(category, &self.entry(category).attributes[index].canonical)
            .expect("validated at load")
    }

    /// Severity rank of a value; 0 is most severe.
    pub fn rank(&self, category: Category, value: &AttributeValue) -> Option<usize> {
        (0..self.entry(category).attributes.len())
            .find(|&i| &self.attribute_value(category, i) == value)
    }

    /// Leftmost-longest attribute-surface hits for one category.
    pub fn find_attributes(&self, category: Category, text: &str) -> Vec<PhraseMatch> {
        let mut hits = Vec::new();
        for (phrase, attr) in &self.compiled.attributes[category.index()] {
            for m in phrase.regex.find_iter(text) {
                hits.push((
                    PhraseMatch {
                        category,
                        attribute: Some(*attr),
                        start: m.start(),
                        end: m.end(),
                    },
                    phrase.order,
                ));
            }
        }
        leftmost_longest(hits)
    }

    /// Leftmost-longest header-keyword hits across all categories.
    pub fn find_headers(&self, text: &str) -> Vec<PhraseMatch> {
        let mut hits = Vec::new();
        for category in Category::ALL {
            for phrase in &self.compiled.headers[category.index()] {
                for m in phrase.regex.find_iter(text) {
                    hits.push((
                        PhraseMatch {
                            category,
                            attribute: None,
                            start: m.start(),
                            end: m.end(),
                        },
                        category.index() * 1000 + phrase.order,
                    ));
                }
            }
        }
        leftmost_longest(hits)
    }

    /// Longest header keyword starting exactly at the beginning of `line`.
    pub fn header_at_start(&self, line: &str) -> Option<PhraseMatch> {
        let mut best: Option<PhraseMatch> = None;
        for category in Category::ALL {
            for phrase in &self.compiled.headers[category.index()] {
                if let Some(m) = phrase.regex.find(line) {
                    if m.start() == 0 && best.is_none_or(|b| m.end() > b.end) {
                        best = Some(PhraseMatch {
                            category,
                            attribute: None,
                            start: 0,
                            end: m.end(),
                        });
                    }
                }
            }
        }
        best
    }

    /// Hits of surfaces distinctive enough to anchor a topic on their own:
    /// surfaces owned by exactly one category that are not header keywords.
    pub fn find_anchor_surfaces(&self, text: &str) -> Vec<PhraseMatch> {
        let mut hits = Vec::new();
        for (i, (category, attr, phrase)) in self.compiled.anchors.iter().enumerate() {
            for m in phrase.regex.find_iter(text) {
                hits.push((
                    PhraseMatch {
                        category: *category,
                        attribute: Some(*attr),
                        start: m.start(),
                        end: m.end(),
                    },
                    i,
                ));
            }
        }
        leftmost_longest(hits)
    }

    pub(crate) fn compiled_templates(&self, category: Category) -> &[CompiledTemplate] {
        &self.compiled.templates[category.index()]
    }

    pub(crate) fn compiled_patterns(&self, category: Category) -> &[(Regex, usize)] {
        &self.compiled.patterns[category.index()]
    }

    /// Canonical value for a surface phrase, by longest match.
    pub fn lookup(&self, category: Category, surface: &str) -> Option<AttributeValue> {
        match category.value_kind() {
            ValueKind::Length => {
                let q = numeric::find_lengths(surface).into_iter().next()?;
                AttributeValue::length_cm(q.greatest_cm()).ok()
            }
            ValueKind::Count => numeric::find_counts(surface)
                .first()
                .map(|c| AttributeValue::Count(c.value)),
            _ => {
                let hits = self.find_attributes(category, surface);
                if let Some(best) = hits
                    .iter()
                    .max_by(|a, b| a.len().cmp(&b.len()).then(b.start.cmp(&a.start)))
                {
                    return Some(self.attribute_value(category, best.attribute?));
                }
                let wanted = normalize_phrase(surface);
                let entry = self.entry(category);
                if let Some(i) = entry
                    .attributes
                    .iter()
                    .position(|a| normalize_phrase(&a.canonical) == wanted)
                {
                    return Some(self.attribute_value(category, i));
                }
                if category.value_kind() == ValueKind::Tnm {
                    return tnm::scan_tnm(surface)
                        .into_iter()
                        .find(|h| h.category == category)
                        .map(|h| h.value);
                }
                None
            }
        }
    }

    /// Serializes the vocabulary back to config JSON (without rules).
    pub fn to_config_json(&self) -> String {
        let categories = self
            .entries
            .iter()
            .map(|e| {
                (
                    e.category.name().to_string(),
                    CategoryConfig {
                        value_kind: e.value_kind,
                        header_keywords: e.header_keywords.clone(),
                        attributes: e.attributes.clone(),
                    },
                )
            })
            .collect();
        let render = |ts: &[KeyTemplate]| ts.iter().map(KeyTemplate::render).collect();
        let key_strings = self
            .key_string_sets
            .iter()
            .map(|k| {
                (
                    k.category.name().to_string(),
                    KeyStringConfig {
                        key_strings: render(&k.key_strings),
                        extension_key_strings: render(&k.extension_key_strings),
                        extension_patterns: k.extension_patterns.clone(),
                    },
                )
            })
            .collect();
        let config = LexiconConfig {
            categories,
            key_strings,
            aggressive_histologies: self.aggressive_histologies.iter().cloned().collect(),
            rules: None,
        };
        serde_json::to_string_pretty(&config).expect("config serializes")
    }
}

fn validate_entry(entry: &CategoryEntry) -> Result<(), LexiconError> {
    let category = entry.category;
    if entry.value_kind != category.value_kind() {
        return Err(LexiconError::ValueKindMismatch {
            category,
            declared: entry.value_kind,
            expected: category.value_kind(),
        });
    }
    if entry.header_keywords.is_empty() {
        return Err(LexiconError::NoHeaderKeywords(category));
    }
    if entry.header_keywords.iter().any(|k| k.trim().is_empty()) {
        return Err(LexiconError::EmptyPhrase(category));
    }
    if !entry.value_kind.is_numeric() && entry.attributes.is_empty() {
        return Err(LexiconError::NoAttributes(category));
    }
    let mut seen = BTreeSet::new();
    for attr in &entry.attributes {
        if !seen.insert(attr.canonical.as_str()) {
            return Err(LexiconError::DuplicateCanonical {
                category,
                value: attr.canonical.clone(),
            });
        }
        if attr.surfaces.is_empty() || attr.all_surfaces().any(|s| s.trim().is_empty()) {
            return Err(LexiconError::EmptyPhrase(category));
        }
        canonical_value(category, &attr.canonical)?;
    }
    Ok(())
}

fn compile(
    entries: &[CategoryEntry],
    key_string_sets: &[KeyStringSet],
) -> Result<Compiled, LexiconError> {
    let bad = |category: Category, pattern: &str, e: regex::Error| LexiconError::BadPattern {
        category,
        pattern: pattern.to_string(),
        message: e.to_string(),
    };

    let mut attributes = Vec::with_capacity(Category::COUNT);
    let mut headers = Vec::with_capacity(Category::COUNT);
    // normalized surface -> owning categories
    let mut owners: BTreeMap<String, BTreeSet<Category>> = BTreeMap::new();
    let mut header_set = BTreeSet::new();
    for entry in entries {
        let mut list = Vec::new();
        for (i, attr) in entry.attributes.iter().enumerate() {
            for s in attr.all_surfaces() {
                let order = list.len();
                list.push((Phrase::compile(s, order).map_err(|e| bad(entry.category, s, e))?, i));
                owners
                    .entry(normalize_phrase(s))
                    .or_default()
                    .insert(entry.category);
            }
        }
        attributes.push(list);
        let mut hs = Vec::new();
        for (order, k) in entry.header_keywords.iter().enumerate() {
            hs.push(Phrase::compile(k, order).map_err(|e| bad(entry.category, k, e))?);
            header_set.insert(normalize_phrase(k));
        }
        headers.push(hs);
    }

    let mut anchors = Vec::new();
    for entry in entries {
        for (i, attr) in entry.attributes.iter().enumerate() {
            for s in attr.all_surfaces() {
                let norm = normalize_phrase(s);
                let unique = owners.get(&norm).is_some_and(|o| o.len() == 1);
                // Bare TNM codes are handled by the case-sensitive code scan.
                let bare_code = entry.value_kind == ValueKind::Tnm
                    && norm == attr.canonical.to_lowercase();
                if unique && !bare_code && !header_set.contains(&norm) {
                    let order = anchors.len();
                    anchors.push((
                        entry.category,
                        i,
                        Phrase::compile(s, order).map_err(|e| bad(entry.category, s, e))?,
                    ));
                }
            }
        }
    }

    let mut templates: Vec<Vec<CompiledTemplate>> =
        (0..Category::COUNT).map(|_| Vec::new()).collect();
    let mut patterns: Vec<Vec<(Regex, usize)>> = (0..Category::COUNT).map(|_| Vec::new()).collect();
    for ks in key_string_sets {
        let category = ks.category;
        for t in ks.templates() {
            let compiled = match t {
                KeyTemplate::Literal(lit) => CompiledTemplate {
                    prefix: matcher::phrase_regex(lit).map_err(|e| bad(category, lit, e))?,
                    suffix: None,
                },
                KeyTemplate::Gapped { prefix, suffix } => CompiledTemplate {
                    prefix: matcher::phrase_regex(prefix).map_err(|e| bad(category, prefix, e))?,
                    suffix: Some(
                        matcher::phrase_regex(suffix).map_err(|e| bad(category, suffix, e))?,
                    ),
                },
            };
            templates[category.index()].push(compiled);
        }
        for p in &ks.extension_patterns {
            let re = Regex::new(&format!("(?i){}", p.pattern))
                .map_err(|e| bad(category, &p.pattern, e))?;
            if p.group == 0 || p.group >= re.captures_len() {
                return Err(LexiconError::BadPattern {
                    category,
                    pattern: p.pattern.clone(),
                    message: format!("group {} does not exist", p.group),
                });
            }
            patterns[category.index()].push((re, p.group));
        }
    }

    Ok(Compiled {
        attributes,
        headers,
        anchors,
        templates,
        patterns,
    })
}
