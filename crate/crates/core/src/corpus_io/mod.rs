//! Corpus, gold and result files.
//!
//! Everything is UTF-8 with `\n` line endings. JSONL files hold one object
//! per line; blank lines are skipped. Line numbers in errors are 1-based.

pub mod synth;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AttributeValue, Category, DocumentMentions, FeatureRecord, GoldAnnotation, Mention,
    ReportDocument, RiskAssignment, RiskCategory, Span, TextIndex,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("document {doc_id}: {message}")]
    SpanOutOfRange { doc_id: String, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("no corpus document for gold id {0:?}")]
    MissingDocument(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io { .. })
    }
}

fn schema(line: usize, message: impl ToString) -> CorpusError {
    CorpusError::Schema {
        line,
        message: message.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, contents: &str) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CorpusError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable record");
    s.push('\n');
    s
}

// ---- corpus ----

fn parse_document(line: usize, raw: &str) -> Result<ReportDocument, CorpusError> {
    let doc: ReportDocument = serde_json::from_str(raw).map_err(|e| schema(line, e))?;
    if doc.id.is_empty() {
        return Err(schema(line, "empty id"));
    }
    Ok(doc)
}

/// Parses a corpus, keeping going past bad lines.
///
/// Returns good documents in input order and `(line, message)` per bad
/// line. Duplicate ids count as bad lines.
pub fn parse_corpus_lenient(text: &str) -> (Vec<(usize, ReportDocument)>, Vec<(usize, String)>) {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in lines(text) {
        match parse_document(line, raw) {
            Ok(doc) if !seen.insert(doc.id.clone()) => {
                errors.push((line, format!("duplicate document id {:?}", doc.id)));
            }
            Ok(doc) => docs.push((line, doc)),
            Err(e) => errors.push((line, e.to_string())),
        }
    }
    (docs, errors)
}

pub fn parse_corpus(text: &str) -> Result<Vec<ReportDocument>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, raw) in lines(text) {
        let doc = parse_document(line, raw)?;
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        out.push(doc);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ReportDocument>, CorpusError> {
    parse_corpus(&read_text(path)?)
}

pub fn corpus_to_string(docs: &[ReportDocument]) -> String {
    docs.iter().map(to_line).collect()
}

pub fn write_corpus(path: &Path, docs: &[ReportDocument]) -> Result<(), CorpusError> {
    write_text(path, &corpus_to_string(docs))
}

// ---- mentions and gold ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireMention {
    category: String,
    text: String,
    start: usize,
    end: usize,
    value: serde_json::Value,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAnnotation {
    doc_id: String,
    mentions: Vec<WireMention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    risk: Option<String>,
}

fn wire_mention(m: &Mention) -> WireMention {
    WireMention {
        category: m.category.name().to_string(),
        text: m.surface.clone(),
        start: m.span.start,
        end: m.span.end,
        value: m.value.to_json(),
    }
}

fn from_wire_mention(line: usize, w: WireMention) -> Result<Mention, CorpusError> {
    let category = Category::from_name(&w.category).map_err(|e| schema(line, e))?;
    let value = AttributeValue::from_json(category, &w.value).map_err(|e| schema(line, e))?;
    if w.start >= w.end {
        return Err(schema(line, format!("empty span [{}, {})", w.start, w.end)));
    }
    Ok(Mention {
        category,
        surface: w.text,
        span: Span::new(w.start, w.end),
        value,
    })
}

fn parse_annotation(line: usize, raw: &str) -> Result<GoldAnnotation, CorpusError> {
    let w: WireAnnotation = serde_json::from_str(raw).map_err(|e| schema(line, e))?;
    let mentions = w
        .mentions
        .into_iter()
        .map(|m| from_wire_mention(line, m))
        .collect::<Result<Vec<_>, _>>()?;
    let risk = w
        .risk
        .map(|r| RiskCategory::parse(&r).map_err(|e| schema(line, e)))
        .transpose()?;
    Ok(GoldAnnotation {
        doc_id: w.doc_id,
        mentions,
        risk,
    })
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldAnnotation>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, raw) in lines(text) {
        let g = parse_annotation(line, raw)?;
        if !seen.insert(g.doc_id.clone()) {
            return Err(CorpusError::DuplicateId(g.doc_id));
        }
        out.push(g);
    }
    Ok(out)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldAnnotation>, CorpusError> {
    parse_gold(&read_text(path)?)
}

/// Same layout as gold files, without the risk field.
pub fn parse_mentions(text: &str) -> Result<Vec<DocumentMentions>, CorpusError> {
    Ok(parse_gold(text)?
        .into_iter()
        .map(|g| DocumentMentions {
            doc_id: g.doc_id,
            mentions: g.mentions,
        })
        .collect())
}

pub fn load_mentions(path: &Path) -> Result<Vec<DocumentMentions>, CorpusError> {
    parse_mentions(&read_text(path)?)
}

fn annotation_line(doc_id: &str, mentions: &[Mention], risk: Option<RiskCategory>) -> String {
    to_line(&WireAnnotation {
        doc_id: doc_id.to_string(),
        mentions: mentions.iter().map(wire_mention).collect(),
        risk: risk.map(|r| r.as_str().to_string()),
    })
}

pub fn gold_to_string(gold: &[GoldAnnotation]) -> String {
    gold.iter()
        .map(|g| annotation_line(&g.doc_id, &g.mentions, g.risk))
        .collect()
}

pub fn write_gold(path: &Path, gold: &[GoldAnnotation]) -> Result<(), CorpusError> {
    write_text(path, &gold_to_string(gold))
}

pub fn mentions_to_string(docs: &[DocumentMentions]) -> String {
    docs.iter()
        .map(|d| annotation_line(&d.doc_id, &d.mentions, None))
        .collect()
}

pub fn write_mentions(path: &Path, docs: &[DocumentMentions]) -> Result<(), CorpusError> {
    write_text(path, &mentions_to_string(docs))
}

/// Checks every gold span against its corpus document.
pub fn validate_gold(gold: &[GoldAnnotation], corpus: &[ReportDocument]) -> Result<(), CorpusError> {
    let by_id: HashMap<&str, &ReportDocument> = corpus.iter().map(|d| (d.id.as_str(), d)).collect();
    for g in gold {
        let doc = by_id
            .get(g.doc_id.as_str())
            .ok_or_else(|| CorpusError::MissingDocument(g.doc_id.clone()))?;
        let index = TextIndex::new(&doc.text);
        for m in &g.mentions {
            m.validate(&index).map_err(|e| CorpusError::SpanOutOfRange {
                doc_id: g.doc_id.clone(),
                message: e.to_string(),
            })?;
        }
    }
    Ok(())
}

// ---- feature records ----

/// `doc_id` followed by the eighteen category display names.
pub fn feature_header() -> Vec<&'static str> {
    std::iter::once("doc_id")
        .chain(Category::ALL.iter().map(|c| c.display_name()))
        .collect()
}

pub fn features_to_string(records: &[FeatureRecord]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(feature_header()).expect("in-memory write");
    for r in records {
        let row: Vec<String> = std::iter::once(r.doc_id.clone())
            .chain(r.iter().map(|(_, v)| v.map(|v| v.to_string()).unwrap_or_default()))
            .collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> Result<(), CorpusError> {
    write_text(path, &features_to_string(records))
}

/// Columns are matched by header name, so order is free; every category
/// column must be present.
pub fn parse_features(text: &str) -> Result<Vec<FeatureRecord>, CorpusError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| CorpusError::Csv(e.to_string()))?.clone();
    let mut id_col = None;
    let mut cols: Vec<(usize, Category)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if h == "doc_id" {
            id_col = Some(i);
            continue;
        }
        let category = Category::ALL
            .iter()
            .copied()
            .find(|c| c.display_name() == h || c.name() == h)
            .ok_or_else(|| schema(1, format!("unknown column {h:?}")))?;
        cols.push((i, category));
    }
    let id_col = id_col.ok_or_else(|| schema(1, "missing doc_id column"))?;
    if let Some(c) = Category::ALL.iter().find(|c| !cols.iter().any(|(_, k)| k == *c)) {
        return Err(schema(1, format!("missing column {:?}", c.display_name())));
    }
    let mut out = Vec::new();
    for (n, row) in r.records().enumerate() {
        let line = n + 2;
        let row = row.map_err(|e| schema(line, e))?;
        let id = row.get(id_col).unwrap_or_default();
        if id.is_empty() {
            return Err(schema(line, "empty doc_id"));
        }
        let mut record = FeatureRecord::new(id);
        for (i, category) in &cols {
            let raw = row.get(*i).unwrap_or_default().trim();
            if raw.is_empty() {
                continue;
            }
            let value = AttributeValue::parse_for(*category, raw).map_err(|e| schema(line, e))?;
            record.set(*category, value).map_err(|e| schema(line, e))?;
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureRecord>, CorpusError> {
    parse_features(&read_text(path)?)
}

// ---- risk lines ----

/// One classifier output line. Either `risk` is set, or `status` and
/// `reason` say why it is not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskCategory>,
    #[serde(default)]
    pub triggers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl RiskRecord {
    pub fn assigned(doc_id: impl Into<String>, a: &RiskAssignment) -> RiskRecord {
        RiskRecord {
            doc_id: doc_id.into(),
            risk: Some(a.risk),
            triggers: a.triggers.iter().map(|t| t.label.clone()).collect(),
            status: None,
            reason: None,
        }
    }

    pub fn unassigned(doc_id: impl Into<String>, status: &str, reason: impl Into<String>) -> RiskRecord {
        RiskRecord {
            doc_id: doc_id.into(),
            risk: None,
            triggers: Vec::new(),
            status: Some(status.to_string()),
            reason: Some(reason.into()),
        }
    }
}

pub fn risks_to_string(records: &[RiskRecord]) -> String {
    records.iter().map(to_line).collect()
}

pub fn write_risks(path: &Path, records: &[RiskRecord]) -> Result<(), CorpusError> {
    write_text(path, &risks_to_string(records))
}

pub fn parse_risks(text: &str) -> Result<Vec<RiskRecord>, CorpusError> {
    lines(text)
        .map(|(line, raw)| serde_json::from_str(raw).map_err(|e| schema(line, e)))
        .collect()
}

pub fn load_risks(path: &Path) -> Result<Vec<RiskRecord>, CorpusError> {
    parse_risks(&read_text(path)?)
}
