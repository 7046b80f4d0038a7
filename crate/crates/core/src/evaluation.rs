//! Scoring extraction against gold mentions and classification against
//! gold labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Category, DocumentMentions, GoldAnnotation, Mention, RiskCategory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("gold document {gold:?} compared with prediction for {pred:?}")]
    CrossDocumentComparison { gold: String, pred: String },
    #[error("label lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateMarginals,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Same category, identical span, equal value.
    Strict,
    /// Same category, overlapping spans.
    Lenient,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Lenient => "lenient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Counts {
        Counts { tp, fp, fn_ }
    }

    pub fn is_empty(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

/// Per-category counts for one document or a pooled corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountTable {
    counts: [Counts; Category::COUNT],
}

impl CountTable {
    pub fn get(&self, category: Category) -> Counts {
        self.counts[category.index()]
    }

    pub fn get_mut(&mut self, category: Category) -> &mut Counts {
        &mut self.counts[category.index()]
    }

    pub fn merge(&mut self, other: &CountTable) {
        for c in Category::ALL {
            *self.get_mut(c) += other.get(c);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, Counts)> + '_ {
        Category::ALL.iter().map(move |&c| (c, self.get(c)))
    }

    /// All categories pooled.
    pub fn pooled(&self) -> Counts {
        micro_average_counts(self.counts.iter().copied())
    }
}

fn is_match(gold: &Mention, pred: &Mention, mode: MatchMode) -> bool {
    if gold.category != pred.category {
        return false;
    }
    match mode {
        MatchMode::Strict => gold.span == pred.span && gold.value == pred.value,
        MatchMode::Lenient => gold.span.overlaps(&pred.span),
    }
}

/// One-to-one greedy matching of two mention lists of the same document.
///
/// Gold mentions are visited by ascending start; each takes the unmatched
/// prediction with the smallest span distance, earliest prediction first.
pub fn match_mention_lists(gold: &[Mention], pred: &[Mention], mode: MatchMode) -> CountTable {
    let mut golds: Vec<&Mention> = gold.iter().collect();
    golds.sort_by_key(|m| (m.span.start, m.span.end, m.category));
    let mut preds: Vec<&Mention> = pred.iter().collect();
    preds.sort_by_key(|m| (m.span.start, m.span.end, m.category));
    let mut used = vec![false; preds.len()];
    let mut table = CountTable::default();
    for g in golds {
        let best = preds
            .iter()
            .enumerate()
            .filter(|(i, p)| !used[*i] && is_match(g, p, mode))
            .min_by_key(|(i, p)| (g.span.distance(&p.span), *i));
        match best {
            Some((i, _)) => {
                used[i] = true;
                table.get_mut(g.category).tp += 1;
            }
            None => table.get_mut(g.category).fn_ += 1,
        }
    }
    for (p, u) in preds.iter().zip(&used) {
        if !u {
            table.get_mut(p.category).fp += 1;
        }
    }
    table
}

pub fn match_mentions(
    gold: &GoldAnnotation,
    pred: &DocumentMentions,
    mode: MatchMode,
) -> Result<CountTable, EvalError> {
    if gold.doc_id != pred.doc_id {
        return Err(EvalError::CrossDocumentComparison {
            gold: gold.doc_id.clone(),
            pred: pred.doc_id.clone(),
        });
    }
    Ok(match_mention_lists(&gold.mentions, &pred.mentions, mode))
}

/// Metric values; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: Counts) -> MetricRow {
    MetricRow {
        accuracy: ratio(c.tp, c.tp + c.fp + c.fn_),
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        // Count form of 2PR/(P+R); stays defined when P and R are both 0.
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

pub fn micro_average_counts(rows: impl IntoIterator<Item = Counts>) -> Counts {
    let mut total = Counts::default();
    for r in rows {
        total += r;
    }
    total
}

/// Pools counts across categories, then scores the pool.
pub fn micro_average(rows: impl IntoIterator<Item = Counts>) -> MetricRow {
    compute_metrics(micro_average_counts(rows))
}

/// Half-up rounding to `places` decimals, robust to binary representation
/// error (0.815 rounds to 0.82).
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let scale = 10f64.powi(places as i32);
    let scaled = x * scale;
    (scaled + 0.5 + 1e-9 * scaled.abs().max(1.0)).floor() / scale
}

/// One rendered row of the extraction metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsEntry {
    /// Category name or `"Overall"`.
    pub category: String,
    pub mode: MatchMode,
    pub counts: Counts,
    pub metrics: MetricRow,
}

pub const OVERALL: &str = "Overall";

/// Per-category rows followed by the pooled row, for each mode given.
pub fn metric_table(tables: &[(MatchMode, CountTable)]) -> Vec<MetricsEntry> {
    let mut out = Vec::new();
    for (mode, table) in tables {
        for (category, counts) in table.iter() {
            out.push(MetricsEntry {
                category: category.name().to_string(),
                mode: *mode,
                counts,
                metrics: compute_metrics(counts),
            });
        }
        let pooled = table.pooled();
        out.push(MetricsEntry {
            category: OVERALL.to_string(),
            mode: *mode,
            counts: pooled,
            metrics: compute_metrics(pooled),
        });
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", round_half_up(x, 2)))
        .unwrap_or_default()
}

pub fn metrics_csv(entries: &[MetricsEntry]) -> String {
    let mut s = String::from("category,mode,accuracy,precision,recall,f1\n");
    for e in entries {
        let m = e.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.category,
            e.mode.as_str(),
            cell(m.accuracy),
            cell(m.precision),
            cell(m.recall),
            cell(m.f1)
        );
    }
    s
}

pub fn metrics_json(entries: &[MetricsEntry]) -> String {
    serde_json::to_string_pretty(entries).expect("metrics serialize")
}

/// Rows are gold, columns predicted, both in High..VeryLow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix4 {
    pub cells: [[usize; 4]; 4],
}

impl ConfusionMatrix4 {
    pub fn from_cells(cells: [[usize; 4]; 4]) -> ConfusionMatrix4 {
        ConfusionMatrix4 { cells }
    }

    pub fn add(&mut self, gold: RiskCategory, pred: RiskCategory) {
        self.cells[gold.matrix_index()][pred.matrix_index()] += 1;
    }

    pub fn get(&self, gold: RiskCategory, pred: RiskCategory) -> usize {
        self.cells[gold.matrix_index()][pred.matrix_index()]
    }

    pub fn row_total(&self, gold: RiskCategory) -> usize {
        self.cells[gold.matrix_index()].iter().sum()
    }

    pub fn col_total(&self, pred: RiskCategory) -> usize {
        self.cells.iter().map(|r| r[pred.matrix_index()]).sum()
    }

    pub fn total(&self) -> usize {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..4).map(|i| self.cells[i][i]).sum()
    }
}

pub fn confusion(
    gold: &[RiskCategory],
    pred: &[RiskCategory],
) -> Result<ConfusionMatrix4, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix4::default();
    for (g, p) in gold.iter().zip(pred) {
        cm.add(*g, *p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub overall_accuracy: f64,
    /// Diagonal over row total, High..VeryLow; `None` for empty rows.
    pub per_class_accuracy: [Option<f64>; 4],
    /// High confused with Low or VeryLow, either direction.
    pub significant_discrepancies: usize,
}

pub fn is_significant(gold: RiskCategory, pred: RiskCategory) -> bool {
    use RiskCategory::*;
    matches!(
        (gold, pred),
        (High, Low) | (High, VeryLow) | (Low, High) | (VeryLow, High)
    )
}

pub fn classification_metrics(cm: &ConfusionMatrix4) -> Result<ClassificationMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class = RiskCategory::DESCENDING.map(|r| ratio(cm.get(r, r), cm.row_total(r)));
    let mut significant = 0;
    for g in RiskCategory::DESCENDING {
        for p in RiskCategory::DESCENDING {
            if is_significant(g, p) {
                significant += cm.get(g, p);
            }
        }
    }
    Ok(ClassificationMetrics {
        overall_accuracy: cm.trace() as f64 / total as f64,
        per_class_accuracy: per_class,
        significant_discrepancies: significant,
    })
}

/// κ = (p_o − p_e) / (1 − p_e).
pub fn cohen_kappa<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::DegenerateMarginals);
    }
    let n = a.len() as f64;
    let mut ma: BTreeMap<T, usize> = BTreeMap::new();
    let mut mb: BTreeMap<T, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x.clone()).or_default() += 1;
        *mb.entry(y.clone()).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let pe: f64 = ma
        .iter()
        .map(|(k, ca)| (*ca as f64 / n) * (*mb.get(k).unwrap_or(&0) as f64 / n))
        .sum();
    if (1.0 - pe).abs() < 1e-15 {
        return Err(EvalError::DegenerateMarginals);
    }
    let po = agree as f64 / n;
    if agree == a.len() {
        return Ok(1.0);
    }
    Ok((po - pe) / (1.0 - pe))
}

pub fn confusion_csv(cm: &ConfusionMatrix4) -> String {
    let mut s = String::from("ground_truth");
    for r in RiskCategory::DESCENDING {
        let _ = write!(s, ",{}", r.label());
    }
    s.push_str(",Total\n");
    for g in RiskCategory::DESCENDING {
        s.push_str(g.label());
        for p in RiskCategory::DESCENDING {
            let _ = write!(s, ",{}", cm.get(g, p));
        }
        let _ = writeln!(s, ",{}", cm.row_total(g));
    }
    s.push_str("Total");
    for p in RiskCategory::DESCENDING {
        let _ = write!(s, ",{}", cm.col_total(p));
    }
    let _ = writeln!(s, ",{}", cm.total());
    s
}

/// Long-form off-diagonal counts: one row per (gold, predicted) pair.
pub fn error_frequency_csv(cm: &ConfusionMatrix4) -> String {
    let mut s = String::from("ground_truth,predicted,count\n");
    for g in RiskCategory::DESCENDING {
        for p in RiskCategory::DESCENDING {
            if g != p {
                let _ = writeln!(s, "{},{},{}", g.as_str(), p.as_str(), cm.get(g, p));
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub doc_id: String,
    pub gold: RiskCategory,
    pub predicted: RiskCategory,
    pub triggers: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeValue, Span};

    fn m(category: Category, start: usize, end: usize, v: &str) -> Mention {
        Mention {
            category,
            surface: "x".repeat(end - start),
            span: Span::new(start, end),
            value: AttributeValue::Categorical(v.into()),
        }
    }

    #[test]
    fn off_by_one_span() {
        let gold = vec![m(Category::Margins, 9, 30, "Positive"), m(Category::Procedure, 0, 5, "Total")];
        let pred = vec![m(Category::Margins, 10, 30, "Positive"), m(Category::Procedure, 0, 5, "Total")];
        let s = match_mention_lists(&gold, &pred, MatchMode::Strict);
        assert_eq!(s.get(Category::Margins), Counts::new(0, 1, 1));
        assert_eq!(s.get(Category::Procedure), Counts::new(1, 0, 0));
        let l = match_mention_lists(&gold, &pred, MatchMode::Lenient);
        assert_eq!(l.get(Category::Margins), Counts::new(1, 0, 0));
    }

    #[test]
    fn spurious_and_cross_document() {
        let gold = vec![m(Category::Margins, 0, 4, "Negative")];
        let mut pred = gold.clone();
        pred.push(m(Category::Margins, 10, 14, "Negative"));
        let c = match_mention_lists(&gold, &pred, MatchMode::Strict);
        assert_eq!(c.get(Category::Margins), Counts::new(1, 1, 0));
        let g = GoldAnnotation {
            doc_id: "a".into(),
            mentions: gold,
            risk: None,
        };
        let p = DocumentMentions {
            doc_id: "b".into(),
            mentions: pred,
        };
        assert!(matches!(
            match_mentions(&g, &p, MatchMode::Strict),
            Err(EvalError::CrossDocumentComparison { .. })
        ));
    }

    #[test]
    fn greedy_prefers_closest_span() {
        let gold = vec![m(Category::Margins, 0, 10, "Negative"), m(Category::Margins, 8, 20, "Negative")];
        let pred = vec![m(Category::Margins, 0, 10, "Negative")];
        let c = match_mention_lists(&gold, &pred, MatchMode::Lenient);
        assert_eq!(c.get(Category::Margins), Counts::new(1, 0, 1));
    }

    #[test]
    fn metric_rows() {
        let r = compute_metrics(Counts::new(86, 14, 24));
        assert_eq!(round_half_up(r.accuracy.unwrap(), 2), 0.69);
        assert_eq!(round_half_up(r.precision.unwrap(), 2), 0.86);
        assert_eq!(round_half_up(r.recall.unwrap(), 2), 0.78);
        assert_eq!(round_half_up(r.f1.unwrap(), 2), 0.82);
        assert_eq!(compute_metrics(Counts::default()), MetricRow::default());
        let r = compute_metrics(Counts::new(54, 0, 46));
        assert_eq!(r.precision, Some(1.0));
        assert_eq!(round_half_up(r.f1.unwrap(), 2), 0.70);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(0.815, 2), 0.82);
        assert_eq!(round_half_up(0.825, 2), 0.83);
        assert_eq!(round_half_up(0.8249, 2), 0.82);
        assert_eq!(round_half_up(1.0, 2), 1.0);
    }

    #[test]
    fn micro_pools_counts() {
        let rows = [Counts::new(2, 1, 0), Counts::new(3, 0, 2), Counts::new(0, 0, 1)];
        assert_eq!(micro_average(rows), compute_metrics(Counts::new(5, 1, 3)));
    }

    fn reference_matrix() -> ConfusionMatrix4 {
        ConfusionMatrix4::from_cells([[10, 2, 1, 0], [0, 33, 5, 0], [0, 0, 62, 0], [0, 0, 0, 7]])
    }

    #[test]
    fn classification_table() {
        let cm = reference_matrix();
        let r = classification_metrics(&cm).unwrap();
        assert_eq!(cm.total(), 120);
        assert!((r.overall_accuracy - 112.0 / 120.0).abs() < 1e-12);
        assert_eq!(r.significant_discrepancies, 1);
        assert_eq!(r.per_class_accuracy[2], Some(1.0));
        assert_eq!(classification_metrics(&ConfusionMatrix4::default()), Err(EvalError::EmptyMatrix));
    }

    #[test]
    fn csv_layouts() {
        let csv = confusion_csv(&reference_matrix());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "ground_truth,High risk,Intermediate risk,Low risk,Very low risk,Total");
        assert_eq!(lines[1], "High risk,10,2,1,0,13");
        assert_eq!(lines[5], "Total,10,35,68,7,120");
        let freq = error_frequency_csv(&reference_matrix());
        assert_eq!(freq.lines().count(), 13);
        assert!(freq.contains("high,low,1"));
    }

    #[test]
    fn kappa_cases() {
        use RiskCategory::*;
        let a = [High, Low, Low, VeryLow];
        assert_eq!(cohen_kappa(&a, &a), Ok(1.0));
        assert!(matches!(cohen_kappa(&a, &a[..3]), Err(EvalError::LengthMismatch { .. })));
        assert_eq!(cohen_kappa(&[Low, Low], &[Low, Low]), Err(EvalError::DegenerateMarginals));
    }
}
