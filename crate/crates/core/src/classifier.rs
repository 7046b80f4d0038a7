//! Hierarchical recurrence-risk classification.
//!
//! Rules live in data (the `rules` section of the lexicon config) and are
//! evaluated tier by tier, High first. The first tier with a firing rule
//! decides; every firing rule of that tier is reported as a trigger.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::DEFAULT_CONFIG;
use crate::model::{
    format_number, AttributeValue, Category, FeatureRecord, RiskAssignment, RiskCategory, Trigger,
};

/// Pseudo rule id tallied for fall-through very-low assignments.
pub const FALL_THROUGH_ID: &str = "VL";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("{doc_id}: insufficient data, missing {missing:?}")]
    InsufficientData {
        doc_id: String,
        missing: Vec<Category>,
    },
    #[error("{doc_id}: no rule fired and tumor size {tumor_size:?} is not below the very-low threshold")]
    Unclassifiable {
        doc_id: String,
        tumor_size: Option<f64>,
    },
    #[error("rule config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Required slots must be populated.
    #[default]
    Strict,
    /// Missing slots count as absent.
    Permissive,
}

/// Predicate over one feature slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Equals {
        category: Category,
        value: String,
    },
    OneOf {
        category: Category,
        values: Vec<String>,
    },
    /// Numeric interval; `above`/`below` are exclusive, `at_least`/`at_most`
    /// inclusive.
    Range {
        category: Category,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        above: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at_least: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        below: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at_most: Option<f64>,
    },
    /// Histologic subtype in the table's aggressive set.
    AggressiveHistology {},
}

impl Condition {
    pub fn category(&self) -> Category {
        match self {
            Condition::Equals { category, .. }
            | Condition::OneOf { category, .. }
            | Condition::Range { category, .. } => *category,
            Condition::AggressiveHistology {} => Category::HistologicSubtype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskRule {
    pub id: String,
    pub tier: RiskCategory,
    /// Short trigger label, e.g. "deposit".
    pub label: String,
    pub description: String,
    pub when: Condition,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesSection {
    very_low_below: f64,
    #[serde(default)]
    required_for_strict: Vec<Category>,
    ledger: Vec<RiskRule>,
}

/// Ordered rule ledger plus fall-through settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTable {
    rules: Vec<RiskRule>,
    very_low_below: f64,
    required_for_strict: Vec<Category>,
    aggressive_histologies: BTreeSet<String>,
}

fn rank(tier: RiskCategory) -> u8 {
    match tier {
        RiskCategory::High => 0,
        RiskCategory::Intermediate => 1,
        RiskCategory::Low => 2,
        RiskCategory::VeryLow => 3,
    }
}

impl RuleTable {
    pub fn new(
        mut rules: Vec<RiskRule>,
        very_low_below: f64,
        required_for_strict: Vec<Category>,
        aggressive_histologies: BTreeSet<String>,
    ) -> Result<RuleTable, ClassifyError> {
        let err = |m: String| Err(ClassifyError::Config(m));
        let mut ids = BTreeSet::new();
        for r in &rules {
            if !ids.insert(r.id.as_str()) {
                return err(format!("duplicate rule id {:?}", r.id));
            }
            if r.tier == RiskCategory::VeryLow {
                return err(format!("rule {} targets very_low, which is the fall-through", r.id));
            }
            let numeric = r.when.category().value_kind().is_numeric();
            match &r.when {
                Condition::Range {
                    above,
                    at_least,
                    below,
                    at_most,
                    ..
                } => {
                    if !numeric {
                        return err(format!("rule {}: range over non-numeric slot", r.id));
                    }
                    if above.is_some() && at_least.is_some() || below.is_some() && at_most.is_some() {
                        return err(format!("rule {}: two bounds on one side", r.id));
                    }
                    if [above, at_least, below, at_most].iter().all(|b| b.is_none()) {
                        return err(format!("rule {}: range without bounds", r.id));
                    }
                }
                Condition::Equals { category, value } => {
                    if numeric {
                        return err(format!("rule {}: equality on numeric slot", r.id));
                    }
                    if AttributeValue::parse_for(*category, value).is_err() {
                        return err(format!("rule {}: bad value {value:?}", r.id));
                    }
                }
                Condition::OneOf { .. } if numeric => {
                    return err(format!("rule {}: set membership on numeric slot", r.id));
                }
                _ => {}
            }
        }
        if !very_low_below.is_finite() {
            return err("very_low_below must be finite".into());
        }
        rules.sort_by_key(|r| rank(r.tier));
        Ok(RuleTable {
            rules,
            very_low_below,
            required_for_strict,
            aggressive_histologies,
        })
    }

    /// Reads the rules section (and aggressive histology list) from a
    /// lexicon config file. A bare rules section is accepted as well.
    pub fn from_config_str(text: &str) -> Result<RuleTable, ClassifyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ClassifyError::Config(e.to_string()))?;
        let section = match value.get("rules") {
            Some(r) => r.clone(),
            None if value.get("ledger").is_some() => {
                let mut v = value.clone();
                if let Some(obj) = v.as_object_mut() {
                    obj.remove("aggressive_histologies");
                }
                v
            }
            None => return Err(ClassifyError::Config("no rules section".into())),
        };
        let section: RulesSection =
            serde_json::from_value(section).map_err(|e| ClassifyError::Config(e.to_string()))?;
        let aggressive = match value.get("aggressive_histologies") {
            Some(v) => serde_json::from_value::<BTreeSet<String>>(v.clone())
                .map_err(|e| ClassifyError::Config(e.to_string()))?,
            None => BTreeSet::new(),
        };
        RuleTable::new(
            section.ledger,
            section.very_low_below,
            section.required_for_strict,
            aggressive,
        )
    }

    /// The shipped ledger.
    pub fn standard() -> RuleTable {
        RuleTable::from_config_str(DEFAULT_CONFIG).expect("shipped rules are valid")
    }

    /// Rules section plus aggressive list, as config JSON.
    pub fn to_config_json(&self) -> String {
        let section = RulesSection {
            very_low_below: self.very_low_below,
            required_for_strict: self.required_for_strict.clone(),
            ledger: self.rules.clone(),
        };
        serde_json::to_string_pretty(&serde_json::json!({
            "rules": section,
            "aggressive_histologies": self.aggressive_histologies,
        }))
        .expect("rules serialize")
    }

    pub fn rules(&self) -> &[RiskRule] {
        &self.rules
    }

    pub fn rule(&self, id: &str) -> Option<&RiskRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn very_low_below(&self) -> f64 {
        self.very_low_below
    }

    pub fn required_for_strict(&self) -> &[Category] {
        &self.required_for_strict
    }

    pub fn aggressive_histologies(&self) -> &BTreeSet<String> {
        &self.aggressive_histologies
    }

    /// Label and value if `rule` fires on `record`.
    fn fire(&self, rule: &RiskRule, record: &FeatureRecord) -> Option<Trigger> {
        let category = rule.when.category();
        let value = record.get(category)?;
        let detail = match &rule.when {
            Condition::Equals { value: want, .. } => {
                let want = AttributeValue::parse_for(category, want).ok()?;
                (value == &want).then(String::new)?
            }
            Condition::OneOf { values, .. } => {
                let code = value.to_string();
                values.contains(&code).then(String::new)?
            }
            Condition::AggressiveHistology {} => {
                let code = value.as_code()?;
                self.aggressive_histologies.contains(code).then(String::new)?
            }
            Condition::Range {
                above,
                at_least,
                below,
                at_most,
                ..
            } => {
                let v = value.as_number()?;
                let lower_ok = above.is_none_or(|b| v > b) && at_least.is_none_or(|b| v >= b);
                let upper_ok = below.is_none_or(|b| v < b) && at_most.is_none_or(|b| v <= b);
                if !(lower_ok && upper_ok) {
                    return None;
                }
                format!(" {}", range_text(v, *above, *at_least, *below, *at_most))
            }
        };
        Some(Trigger {
            rule_id: rule.id.clone(),
            tier: rule.tier,
            category,
            value: value.clone(),
            label: format!("{}: {}{}", rule.id, rule.label, detail),
        })
    }
}

fn range_text(v: f64, above: Option<f64>, at_least: Option<f64>, below: Option<f64>, at_most: Option<f64>) -> String {
    let v = format_number(v);
    let lower = above.map(|b| ('(', b)).or(at_least.map(|b| ('[', b)));
    let upper = below.map(|b| (')', b)).or(at_most.map(|b| (']', b)));
    match (lower, upper) {
        (Some((lb, l)), Some((ub, u))) => {
            format!("{v} in {lb}{}, {}{ub}", format_number(l), format_number(u))
        }
        (Some((lb, l)), None) => {
            format!("{v} {} {}", if lb == '(' { ">" } else { ">=" }, format_number(l))
        }
        (None, Some((ub, u))) => {
            format!("{v} {} {}", if ub == ')' { "<" } else { "<=" }, format_number(u))
        }
        (None, None) => v,
    }
}

/// Assigns a risk tier with its triggers.
pub fn classify(
    record: &FeatureRecord,
    table: &RuleTable,
    policy: Policy,
) -> Result<RiskAssignment, ClassifyError> {
    if policy == Policy::Strict {
        let missing: Vec<Category> = table
            .required_for_strict
            .iter()
            .copied()
            .filter(|c| !record.is_populated(*c))
            .collect();
        if !missing.is_empty() {
            return Err(ClassifyError::InsufficientData {
                doc_id: record.doc_id.clone(),
                missing,
            });
        }
    }
    for tier in [RiskCategory::High, RiskCategory::Intermediate, RiskCategory::Low] {
        let triggers: Vec<Trigger> = table
            .rules
            .iter()
            .filter(|r| r.tier == tier)
            .filter_map(|r| table.fire(r, record))
            .collect();
        if !triggers.is_empty() {
            return Ok(RiskAssignment { risk: tier, triggers });
        }
    }
    match record.tumor_size() {
        Some(size) if size >= table.very_low_below => Err(ClassifyError::Unclassifiable {
            doc_id: record.doc_id.clone(),
            tumor_size: Some(size),
        }),
        _ => Ok(RiskAssignment::very_low()),
    }
}

/// First-trigger tallies for one tier.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TierTally {
    pub total: usize,
    pub counts: BTreeMap<String, usize>,
}

impl TierTally {
    /// Share of the tier, in percent.
    pub fn percent(&self, rule_id: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        100.0 * *self.counts.get(rule_id).unwrap_or(&0) as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TriggerDistribution {
    pub tiers: BTreeMap<RiskCategory, TierTally>,
}

impl TriggerDistribution {
    pub fn tier(&self, tier: RiskCategory) -> Option<&TierTally> {
        self.tiers.get(&tier)
    }
}

/// Tallies the highest-precedence trigger of each assignment per tier.
pub fn trigger_distribution(assignments: &[RiskAssignment]) -> TriggerDistribution {
    let mut dist = TriggerDistribution::default();
    for a in assignments {
        let id = a
            .triggers
            .first()
            .map_or(FALL_THROUGH_ID, |t| t.rule_id.as_str());
        let tally = dist.tiers.entry(a.risk).or_default();
        tally.total += 1;
        *tally.counts.entry(id.to_string()).or_default() += 1;
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(s: &str) -> AttributeValue {
        AttributeValue::Categorical(s.into())
    }

    fn len(v: f64) -> AttributeValue {
        AttributeValue::length_cm(v).unwrap()
    }

    fn ids(a: &RiskAssignment) -> Vec<&str> {
        a.triggers.iter().map(|t| t.rule_id.as_str()).collect()
    }

    fn permissive(r: &FeatureRecord) -> RiskAssignment {
        classify(r, &RuleTable::standard(), Policy::Permissive).unwrap()
    }

    #[test]
    fn standard_ledger_shape() {
        let t = RuleTable::standard();
        let got: Vec<&str> = t.rules().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(
            got,
            ["H1", "H2", "H3", "H4", "I1", "I2", "I3", "I4", "I5", "I6", "L1", "L2", "L3", "L4"]
        );
        assert_eq!(t.very_low_below(), 1.0);
        assert_eq!(t.aggressive_histologies().len(), 5);
    }

    #[test]
    fn spec_examples() {
        let high = FeatureRecord::new("f3")
            .with(Category::ExtranodalExtension, cat("Positive"))
            .with(Category::SizeOfLargestMetastaticDeposit, len(5.5))
            .with(Category::NumberOfLymphNodesInvolved, AttributeValue::Count(23))
            .with(Category::TumorSize, len(2.8));
        let a = permissive(&high);
        assert_eq!(a.risk, RiskCategory::High);
        assert_eq!(ids(&a), ["H1", "H2"]);
        assert_eq!(a.triggers[0].label, "H1: extranodal extension");
        assert_eq!(a.triggers[1].label, "H2: deposit 5.5 > 3");

        let vl = FeatureRecord::new("v").with(Category::TumorSize, len(0.8));
        assert_eq!(permissive(&vl), RiskAssignment::very_low());

        let low = FeatureRecord::new("l")
            .with(Category::TumorSize, len(2.5))
            .with(Category::NumberOfLymphNodesInvolved, AttributeValue::Count(3))
            .with(Category::SizeOfLargestMetastaticDeposit, len(0.4));
        let a = permissive(&low);
        assert_eq!(a.risk, RiskCategory::Low);
        assert_eq!(ids(&a), ["L1", "L2", "L4"]);

        let big = FeatureRecord::new("b").with(Category::TumorSize, len(5.0));
        assert_eq!(ids(&permissive(&big)), ["I2"]);

        let angio = FeatureRecord::new("a")
            .with(Category::TumorSize, len(2.0))
            .with(Category::Angioinvasion, cat("Positive"));
        assert_eq!(permissive(&angio).risk, RiskCategory::Intermediate);
    }

    #[test]
    fn boundaries() {
        let size = |v| permissive(&FeatureRecord::new("s").with(Category::TumorSize, len(v))).risk;
        assert_eq!(size(4.0), RiskCategory::Low);
        assert_eq!(size(1.0), RiskCategory::Low);
        assert_eq!(size(0.99), RiskCategory::VeryLow);
        assert_eq!(size(4.01), RiskCategory::Intermediate);
        let dep = |v| {
            permissive(
                &FeatureRecord::new("d")
                    .with(Category::TumorSize, len(0.5))
                    .with(Category::SizeOfLargestMetastaticDeposit, len(v)),
            )
            .risk
        };
        assert_eq!(dep(3.0), RiskCategory::Intermediate);
        assert_eq!(dep(1.0), RiskCategory::Intermediate);
        assert_eq!(dep(3.01), RiskCategory::High);
        assert_eq!(dep(0.99), RiskCategory::Low);
        let nodes = |n| {
            permissive(
                &FeatureRecord::new("n")
                    .with(Category::TumorSize, len(0.5))
                    .with(Category::NumberOfLymphNodesInvolved, AttributeValue::Count(n)),
            )
            .risk
        };
        assert_eq!(nodes(5), RiskCategory::Low);
        assert_eq!(nodes(6), RiskCategory::Intermediate);
        assert_eq!(nodes(0), RiskCategory::VeryLow);
    }

    #[test]
    fn strict_requires_core_slots() {
        let r = FeatureRecord::new("m").with(Category::Angioinvasion, cat("Negative"));
        match classify(&r, &RuleTable::standard(), Policy::Strict) {
            Err(ClassifyError::InsufficientData { missing, .. }) => {
                assert!(missing.contains(&Category::TumorSize))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unclassifiable_guard() {
        let table = RuleTable::new(Vec::new(), 1.0, Vec::new(), BTreeSet::new()).unwrap();
        let r = FeatureRecord::new("g").with(Category::TumorSize, len(2.0));
        assert!(matches!(
            classify(&r, &table, Policy::Permissive),
            Err(ClassifyError::Unclassifiable { .. })
        ));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let t = RuleTable::standard();
        assert_eq!(RuleTable::from_config_str(&t.to_config_json()).unwrap(), t);
        let mut bad = t.rules().to_vec();
        bad.push(bad[0].clone());
        assert!(RuleTable::new(bad, 1.0, Vec::new(), BTreeSet::new()).is_err());
        let mut vl = t.rules()[0].clone();
        vl.id = "X".into();
        vl.tier = RiskCategory::VeryLow;
        assert!(RuleTable::new(vec![vl], 1.0, Vec::new(), BTreeSet::new()).is_err());
    }

    #[test]
    fn distribution_tallies_first_trigger() {
        let h = RiskAssignment {
            risk: RiskCategory::High,
            triggers: vec![Trigger {
                rule_id: "H1".into(),
                tier: RiskCategory::High,
                category: Category::ExtranodalExtension,
                value: cat("Positive"),
                label: "H1: extranodal extension".into(),
            }],
        };
        let dist = trigger_distribution(&vec![h; 10]);
        let high = dist.tier(RiskCategory::High).unwrap();
        assert_eq!(high.total, 10);
        assert_eq!(high.percent("H1"), 100.0);
        assert!(trigger_distribution(&[]).tiers.is_empty());
    }
}
