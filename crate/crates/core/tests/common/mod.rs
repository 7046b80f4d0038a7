//! Shared fixtures for the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thyropath::classifier::{classify, Policy, RuleTable};
use thyropath::corpus_io::synth::{generate_synthetic, GeneratorConfig, NoiseConfig};
use thyropath::evaluation::{match_mentions, CountTable, MatchMode};
use thyropath::{
    default_lexicon, extract, AttributeValue, Category, DocumentMentions, ExtractionLexicon,
    FeatureRecord, FormatHint, ReportDocument, ReportFormat, RiskCategory,
};

pub const SYNOPTIC_EXAMPLE: &str = "SYNOPTIC REPORT
 Procedure: Total thyroidectomy.
 Tumor Focality: Unifocal.
 Tumor Site: Right lobe.
 Tumor Size: Greatest dimension: 2.8 cm.
 Histologic Type: Papillary carcinoma, classic.
 Margins: Involved by carcinoma.
 Angioinvasion (Vascular Invasion): Not identified.
 Lymphatic Invasion: Present.
 Extrathyroidal Extension: Not identified.
 Regional Lymph Nodes
 Number of Lymph Nodes Involved: 23.
 Level VI, levels IIA, IIB, III and IV.
 Number of Lymph Nodes Examined: 44.
 Level VI, levels II-IV, paraesophageal.
 Size of Largest Metastatic Deposit: 5.5 cm.
 Extranodal Extension: Present.
 Pathologic Staging (AJCC, 8th edition)
 TNM Descriptors: Not applicable.
 Primary Tumor: pT2.
 Regional lymph nodes: pN1b.
 Distant Metastasis: Not applicable.
";

pub fn cat(v: &str) -> AttributeValue {
    AttributeValue::Categorical(v.to_string())
}

pub fn cm(v: f64) -> AttributeValue {
    AttributeValue::length_cm(v).unwrap()
}

pub fn tnm(v: &str) -> AttributeValue {
    AttributeValue::tnm(v).unwrap()
}

/// The feature row shown alongside the synoptic example.
pub fn synoptic_record() -> FeatureRecord {
    use Category::*;
    FeatureRecord::new("synoptic")
        .with(Procedure, cat("TotalThyroidectomy"))
        .with(TumorFocality, cat("Unifocal"))
        .with(TumorSite, cat("RightLobe"))
        .with(TumorSize, cm(2.8))
        .with(HistologicSubtype, cat("Classic"))
        .with(Margins, cat("Positive"))
        .with(Angioinvasion, cat("Negative"))
        .with(LymphaticInvasion, cat("Positive"))
        .with(ExtrathyroidalExtension, cat("Negative"))
        .with(NumberOfLymphNodesInvolved, AttributeValue::Count(23))
        .with(NumberOfLymphNodesExamined, AttributeValue::Count(44))
        .with(SizeOfLargestMetastaticDeposit, cm(5.5))
        .with(ExtranodalExtension, cat("Positive"))
        .with(PathologicStaging, AttributeValue::staging(8).unwrap())
        .with(PrimaryTumorTNM, tnm("T2"))
        .with(LymphNodesTNM, tnm("N1"))
        .with(DistantMetastasis, tnm("MX"))
}

// ---- independent ledger oracle ----

type Pred = fn(&FeatureRecord) -> bool;

fn n(r: &FeatureRecord, c: Category) -> Option<f64> {
    r.number(c)
}

fn is(r: &FeatureRecord, c: Category, v: &str) -> bool {
    r.code(c) == Some(v)
}

/// Every row of the risk ledger as a free-standing predicate.
pub fn ledger() -> Vec<(&'static str, RiskCategory, Pred)> {
    use Category::*;
    use RiskCategory::*;
    vec![
        ("H1", High, |r| is(r, ExtranodalExtension, "Positive")),
        ("H2", High, |r| n(r, SizeOfLargestMetastaticDeposit).is_some_and(|v| v > 3.0)),
        ("H3", High, |r| is(r, DistantMetastasis, "M1")),
        ("H4", High, |r| is(r, ExtrathyroidalExtension, "Macroscopic")),
        ("I1", Intermediate, |r| n(r, NumberOfLymphNodesInvolved).is_some_and(|v| v > 5.0)),
        ("I2", Intermediate, |r| n(r, TumorSize).is_some_and(|v| v > 4.0)),
        ("I3", Intermediate, |r| is(r, Angioinvasion, "Positive")),
        ("I4", Intermediate, |r| {
            n(r, SizeOfLargestMetastaticDeposit).is_some_and(|v| (1.0..=3.0).contains(&v))
        }),
        ("I5", Intermediate, |r| {
            ["TallCell", "Hobnail", "ColumnarCell", "SolidTrabecular", "DiffuseSclerosing"]
                .iter()
                .any(|h| is(r, HistologicSubtype, h))
        }),
        ("I6", Intermediate, |r| is(r, ExtrathyroidalExtension, "MicroscopicModerateSevere")),
        ("L1", Low, |r| n(r, TumorSize).is_some_and(|v| (1.0..=4.0).contains(&v))),
        ("L2", Low, |r| n(r, NumberOfLymphNodesInvolved).is_some_and(|v| (1.0..=5.0).contains(&v))),
        ("L3", Low, |r| is(r, ExtrathyroidalExtension, "MicroscopicMinimal")),
        ("L4", Low, |r| n(r, SizeOfLargestMetastaticDeposit).is_some_and(|v| v > 0.0 && v < 1.0)),
    ]
}

/// Brute force: evaluate every row, keep the most severe tier that fired.
/// `Err(())` marks a record that nothing classifies (size of 1 cm or more
/// with no trigger).
pub fn oracle(r: &FeatureRecord) -> Result<(RiskCategory, Vec<&'static str>), ()> {
    let fired: Vec<_> = ledger().into_iter().filter(|(_, _, p)| p(r)).collect();
    match fired.iter().map(|f| f.1).max() {
        Some(top) => Ok((
            top,
            fired.iter().filter(|f| f.1 == top).map(|f| f.0).collect(),
        )),
        None => match r.tumor_size() {
            Some(s) if s >= 1.0 => Err(()),
            _ => Ok((RiskCategory::VeryLow, Vec::new())),
        },
    }
}

// ---- random records ----

const VALUES: &[(Category, &[&str])] = &[
    (
        Category::Procedure,
        &["TotalThyroidectomy", "SubtotalThyroidectomy", "Hemithyroidectomy", "Isthmusectomy"],
    ),
    (Category::TumorFocality, &["Multifocal", "Unifocal"]),
    (Category::TumorSite, &["RightLobe", "LeftLobe", "Isthmus"]),
    (
        Category::HistologicSubtype,
        &[
            "TallCell",
            "Hobnail",
            "ColumnarCell",
            "SolidTrabecular",
            "DiffuseSclerosing",
            "CribriformMorular",
            "FollicularInfiltrative",
            "Classic",
            "Oncocytic",
            "Microcarcinoma",
        ],
    ),
    (Category::Margins, &["Positive", "Negative"]),
    (Category::Angioinvasion, &["Positive", "Negative"]),
    (Category::LymphaticInvasion, &["Positive", "Negative"]),
    (Category::LymphovascularInvasion, &["Positive", "Negative"]),
    (
        Category::ExtrathyroidalExtension,
        &["Macroscopic", "MicroscopicModerateSevere", "MicroscopicMinimal", "Negative"],
    ),
    (Category::ExtranodalExtension, &["Positive", "Negative"]),
    (Category::PrimaryTumorTNM, &["T1", "T2", "T3", "T4"]),
    (Category::LymphNodesTNM, &["N0", "N1", "NX"]),
    (Category::DistantMetastasis, &["M0", "M1", "MX"]),
];

/// Lengths cluster on the ledger thresholds.
const LENGTHS: [f64; 14] = [0.1, 0.5, 0.9, 0.99, 1.0, 1.01, 2.0, 2.99, 3.0, 3.01, 3.5, 4.0, 4.01, 6.0];

/// Each slot present with probability `fill`; values over the full domain.
pub fn random_record(rng: &mut ChaCha8Rng, id: &str, fill: f64) -> FeatureRecord {
    let mut r = FeatureRecord::new(id);
    for (c, values) in VALUES {
        if rng.gen_bool(fill) {
            let v = values[rng.gen_range(0..values.len())];
            let value = if c.value_kind() == thyropath::ValueKind::Tnm {
                tnm(v)
            } else {
                cat(v)
            };
            r.set(*c, value).unwrap();
        }
    }
    for c in [Category::TumorSize, Category::SizeOfLargestMetastaticDeposit] {
        if rng.gen_bool(fill) {
            let v = if rng.gen_bool(0.5) {
                LENGTHS[rng.gen_range(0..LENGTHS.len())]
            } else {
                f64::from(rng.gen_range(1..=80)) / 10.0
            };
            r.set(c, cm(v)).unwrap();
        }
    }
    for c in [
        Category::NumberOfLymphNodesInvolved,
        Category::NumberOfLymphNodesExamined,
    ] {
        if rng.gen_bool(fill) {
            r.set(c, AttributeValue::Count(rng.gen_range(0..=12))).unwrap();
        }
    }
    if rng.gen_bool(fill) {
        r.set(
            Category::PathologicStaging,
            AttributeValue::staging(if rng.gen_bool(0.5) { 7 } else { 8 }).unwrap(),
        )
        .unwrap();
    }
    r
}

pub fn record_strategy() -> impl Strategy<Value = FeatureRecord> {
    (any::<u64>(), 0.2f64..1.0).prop_map(|(seed, fill)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_record(&mut rng, "prop", fill)
    })
}

/// Checks one record against the oracle: tier, trigger ids in ledger order,
/// and the unclassifiable guard.
pub fn agrees_with_oracle(table: &RuleTable, r: &FeatureRecord) -> Result<(), String> {
    let got = classify(r, table, Policy::Permissive);
    match (oracle(r), got) {
        (Ok((tier, ids)), Ok(a)) => {
            let got_ids: Vec<&str> = a.triggers.iter().map(|t| t.rule_id.as_str()).collect();
            if a.risk == tier && got_ids == ids && a.is_consistent() {
                Ok(())
            } else {
                Err(format!("{r:?}: oracle {tier:?} {ids:?}, classifier {:?} {got_ids:?}", a.risk))
            }
        }
        (Err(()), Err(thyropath::ClassifyError::Unclassifiable { .. })) => Ok(()),
        (o, g) => Err(format!("{r:?}: oracle {o:?}, classifier {g:?}")),
    }
}

// ---- severity edits ----

/// Edits that can only make a record more severe.
pub fn escalate(r: &FeatureRecord, which: u8, amount: u8) -> FeatureRecord {
    use Category::*;
    let mut r = r.clone();
    let bump = |v: Option<f64>| v.unwrap_or(0.0) + f64::from(amount) / 10.0;
    match which % 8 {
        0 => r.set(ExtranodalExtension, cat("Positive")).unwrap(),
        1 => {
            let v = bump(r.number(SizeOfLargestMetastaticDeposit)).min(99.0);
            if r.number(SizeOfLargestMetastaticDeposit).is_some() {
                r.set(SizeOfLargestMetastaticDeposit, cm(v)).unwrap();
            }
        }
        2 => r.set(DistantMetastasis, tnm("M1")).unwrap(),
        3 => {
            let ladder = ["Negative", "MicroscopicMinimal", "MicroscopicModerateSevere", "Macroscopic"];
            let now = r
                .code(ExtrathyroidalExtension)
                .and_then(|c| ladder.iter().position(|l| *l == c))
                .unwrap_or(0);
            let next = (now + 1 + usize::from(amount % 3)).min(3);
            r.set(ExtrathyroidalExtension, cat(ladder[next])).unwrap();
        }
        4 => {
            let now = r
                .get(NumberOfLymphNodesInvolved)
                .and_then(AttributeValue::as_count)
                .unwrap_or(0);
            r.set(NumberOfLymphNodesInvolved, AttributeValue::Count(now + u32::from(amount)))
                .unwrap();
        }
        5 => {
            if let Some(s) = r.tumor_size() {
                r.set(TumorSize, cm((s + f64::from(amount) / 10.0).min(99.0))).unwrap();
            }
        }
        6 => r.set(Angioinvasion, cat("Positive")).unwrap(),
        _ => r.set(HistologicSubtype, cat("TallCell")).unwrap(),
    }
    r
}

/// Tier never drops after an escalating edit.
pub fn monotone(table: &RuleTable, r: &FeatureRecord, which: u8, amount: u8) -> Result<(), TestCaseError> {
    let before = classify(r, table, Policy::Permissive);
    let after = classify(&escalate(r, which, amount), table, Policy::Permissive);
    if let (Ok(b), Ok(a)) = (&before, &after) {
        prop_assert!(a.risk >= b.risk, "edit {which}/{amount}: {:?} -> {:?} for {r:?}", b.risk, a.risk);
    }
    Ok(())
}

// ---- pipeline runs ----

pub struct NoiseRun {
    pub strict: [CountTable; 2],
    pub lenient: [CountTable; 2],
}

/// Index 0 is structured, 1 is narrative.
pub fn noise_run(lexicon: &ExtractionLexicon, seed: u64, n: usize) -> NoiseRun {
    let corpus = generate_synthetic(&GeneratorConfig {
        seed,
        n,
        structured_fraction: 0.5,
        noise: NoiseConfig::standard(),
        ..GeneratorConfig::default()
    })
    .unwrap();
    let mut run = NoiseRun {
        strict: Default::default(),
        lenient: Default::default(),
    };
    for case in &corpus.cases {
        let slot = usize::from(case.format == ReportFormat::Unstructured);
        let pred = DocumentMentions {
            doc_id: case.document.id.clone(),
            mentions: extract(&case.document, lexicon).unwrap(),
        };
        run.strict[slot].merge(&match_mentions(&case.gold, &pred, MatchMode::Strict).unwrap());
        run.lenient[slot].merge(&match_mentions(&case.gold, &pred, MatchMode::Lenient).unwrap());
    }
    run
}

pub fn structured_doc(body: &str) -> ReportDocument {
    ReportDocument::new("t", format!("SYNOPTIC REPORT\n{body}"), FormatHint::Structured)
}

pub fn lexicon() -> ExtractionLexicon {
    default_lexicon()
}

/// One compiled lexicon per test binary; building it dominates short cases.
pub fn shared_lexicon() -> &'static ExtractionLexicon {
    static LEXICON: std::sync::OnceLock<ExtractionLexicon> = std::sync::OnceLock::new();
    LEXICON.get_or_init(default_lexicon)
}
