//! Seeded synthetic report corpora.
//!
//! Each document starts as a sampled [`FeatureRecord`], is rendered through
//! a synoptic or a narrative template, and carries gold mentions whose
//! spans are recorded while the text is written. Gold risk labels come from
//! [`oracle_risk`], a direct transcription of the default rule ledger that
//! does not go through the classifier.
//!
//! Surface tables live here rather than in the lexicon config so that a
//! lexicon regression shows up as an extraction miss instead of being
//! silently mirrored by the generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus_io::{corpus_to_string, gold_to_string};
use crate::model::{
    AttributeValue, Category, FeatureRecord, FormatHint, GoldAnnotation, Mention, ReportDocument,
    ReportFormat, RiskCategory, TextIndex,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("cohort rule {0:?} is not in the ledger")]
    UnknownRule(String),
}

/// Sampling knobs. Probabilities are per document; ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Distributions {
    /// Greatest tumor dimension, cm.
    pub size_cm: (f64, f64),
    pub multifocal: f64,
    pub aggressive_histology: f64,
    pub margins_positive: f64,
    pub angioinvasion: f64,
    pub lymphatic_invasion: f64,
    /// Chance the report has a lymphovascular invasion line at all.
    pub lvi_reported: f64,
    pub lvi_positive: f64,
    pub ete_minimal: f64,
    pub ete_moderate_severe: f64,
    pub ete_macroscopic: f64,
    /// Chance any lymph nodes were submitted.
    pub nodes_sampled: f64,
    pub node_positive: f64,
    pub nodes_involved: (u32, u32),
    /// Examined minus involved.
    pub nodes_uninvolved: (u32, u32),
    pub deposit_cm: (f64, f64),
    pub extranodal_extension: f64,
    pub distant_metastasis: f64,
    /// Chance M0 is stated rather than "not applicable".
    pub m_reported: f64,
    pub eighth_edition: f64,
}

impl Default for Distributions {
    fn default() -> Self {
        Distributions {
            size_cm: (0.2, 6.0),
            multifocal: 0.3,
            aggressive_histology: 0.08,
            margins_positive: 0.15,
            angioinvasion: 0.15,
            lymphatic_invasion: 0.2,
            lvi_reported: 0.3,
            lvi_positive: 0.2,
            ete_minimal: 0.12,
            ete_moderate_severe: 0.04,
            ete_macroscopic: 0.02,
            nodes_sampled: 0.75,
            node_positive: 0.45,
            nodes_involved: (1, 25),
            nodes_uninvolved: (0, 30),
            deposit_cm: (0.1, 6.0),
            extranodal_extension: 0.25,
            distant_metastasis: 0.02,
            m_reported: 0.5,
            eighth_edition: 0.7,
        }
    }
}

/// Rates of the perturbations that make extraction hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Alternative in-lexicon surface.
    pub synonym: f64,
    /// Surface the lexicon does not know.
    pub out_of_lexicon: f64,
    /// Shuffle the synoptic blocks.
    pub header_reorder: f64,
    pub mm_units: f64,
    /// Drop each conditional field.
    pub drop_conditional: f64,
    /// Gold span swallows the preceding word.
    pub boundary_jitter: f64,
    /// Narrative only: wording outside the lexicon's anchors and phrases.
    pub hard_phrasing: f64,
    /// Narrative only: a misleading clinical-history paragraph.
    pub distractor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::none()
    }
}

impl NoiseConfig {
    pub fn none() -> NoiseConfig {
        NoiseConfig {
            synonym: 0.0,
            out_of_lexicon: 0.0,
            header_reorder: 0.0,
            mm_units: 0.0,
            drop_conditional: 0.0,
            boundary_jitter: 0.0,
            hard_phrasing: 0.0,
            distractor: 0.0,
        }
    }

    pub fn standard() -> NoiseConfig {
        NoiseConfig {
            synonym: 0.3,
            out_of_lexicon: 0.06,
            header_reorder: 0.3,
            mm_units: 0.2,
            drop_conditional: 0.15,
            boundary_jitter: 0.05,
            hard_phrasing: 0.35,
            distractor: 0.2,
        }
    }

    pub fn profile(name: &str) -> Result<NoiseConfig, SynthError> {
        match name {
            "none" => Ok(NoiseConfig::none()),
            "standard" => Ok(NoiseConfig::standard()),
            other => Err(SynthError::Config(format!("unknown noise profile {other:?}"))),
        }
    }

    fn rates(&self) -> [(&'static str, f64); 8] {
        [
            ("synonym", self.synonym),
            ("out_of_lexicon", self.out_of_lexicon),
            ("header_reorder", self.header_reorder),
            ("mm_units", self.mm_units),
            ("drop_conditional", self.drop_conditional),
            ("boundary_jitter", self.boundary_jitter),
            ("hard_phrasing", self.hard_phrasing),
            ("distractor", self.distractor),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n: usize,
    pub structured_fraction: f64,
    pub distributions: Distributions,
    pub noise: NoiseConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n: 100,
            structured_fraction: 0.5,
            distributions: Distributions::default(),
            noise: NoiseConfig::none(),
        }
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SynthError::Config(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        check_fraction("structured_fraction", self.structured_fraction)?;
        for (name, v) in self.noise.rates() {
            check_fraction(name, v)?;
        }
        let d = &self.distributions;
        for (name, v) in [
            ("multifocal", d.multifocal),
            ("aggressive_histology", d.aggressive_histology),
            ("margins_positive", d.margins_positive),
            ("angioinvasion", d.angioinvasion),
            ("lymphatic_invasion", d.lymphatic_invasion),
            ("lvi_reported", d.lvi_reported),
            ("lvi_positive", d.lvi_positive),
            ("ete_minimal", d.ete_minimal),
            ("ete_moderate_severe", d.ete_moderate_severe),
            ("ete_macroscopic", d.ete_macroscopic),
            ("nodes_sampled", d.nodes_sampled),
            ("node_positive", d.node_positive),
            ("extranodal_extension", d.extranodal_extension),
            ("distant_metastasis", d.distant_metastasis),
            ("m_reported", d.m_reported),
            ("eighth_edition", d.eighth_edition),
        ] {
            check_fraction(name, v)?;
        }
        check_fraction("ete total", d.ete_minimal + d.ete_moderate_severe + d.ete_macroscopic)?;
        for (name, (lo, hi)) in [("size_cm", d.size_cm), ("deposit_cm", d.deposit_cm)] {
            if !(lo >= 0.1 && lo <= hi && hi < 100.0) {
                return Err(SynthError::Config(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0.1 <= lo <= hi < 100"
                )));
            }
        }
        if d.nodes_involved.0 == 0 || d.nodes_involved.0 > d.nodes_involved.1 {
            return Err(SynthError::Config("nodes_involved must be 1 <= lo <= hi".into()));
        }
        if d.nodes_uninvolved.0 > d.nodes_uninvolved.1 {
            return Err(SynthError::Config("nodes_uninvolved must be lo <= hi".into()));
        }
        Ok(())
    }
}

// ---- oracle ----

pub const AGGRESSIVE: [&str; 5] = [
    "TallCell",
    "Hobnail",
    "ColumnarCell",
    "SolidTrabecular",
    "DiffuseSclerosing",
];

/// Tier and first rule id of the default ledger, evaluated directly.
///
/// `None` when nothing fires and the tumor is 1 cm or larger. Records
/// without any trigger and no size fall through to very low, the
/// permissive reading.
pub fn oracle_risk(r: &FeatureRecord) -> Option<(RiskCategory, &'static str)> {
    use Category::*;
    let code = |c| r.code(c);
    let num = |c| r.number(c);
    let size = num(TumorSize);
    let nodes = num(NumberOfLymphNodesInvolved);
    let deposit = num(SizeOfLargestMetastaticDeposit);
    let ete = code(ExtrathyroidalExtension);

    let high = [
        (code(ExtranodalExtension) == Some("Positive"), "H1"),
        (deposit.is_some_and(|d| d > 3.0), "H2"),
        (code(DistantMetastasis) == Some("M1"), "H3"),
        (ete == Some("Macroscopic"), "H4"),
    ];
    let intermediate = [
        (nodes.is_some_and(|n| n > 5.0), "I1"),
        (size.is_some_and(|s| s > 4.0), "I2"),
        (code(Angioinvasion) == Some("Positive"), "I3"),
        (deposit.is_some_and(|d| (1.0..=3.0).contains(&d)), "I4"),
        (code(HistologicSubtype).is_some_and(|h| AGGRESSIVE.contains(&h)), "I5"),
        (ete == Some("MicroscopicModerateSevere"), "I6"),
    ];
    let low = [
        (size.is_some_and(|s| (1.0..=4.0).contains(&s)), "L1"),
        (nodes.is_some_and(|n| (1.0..=5.0).contains(&n)), "L2"),
        (ete == Some("MicroscopicMinimal"), "L3"),
        (deposit.is_some_and(|d| d > 0.0 && d < 1.0), "L4"),
    ];
    for (tier, rules) in [
        (RiskCategory::High, &high[..]),
        (RiskCategory::Intermediate, &intermediate[..]),
        (RiskCategory::Low, &low[..]),
    ] {
        if let Some((_, id)) = rules.iter().find(|(fired, _)| *fired) {
            return Some((tier, id));
        }
    }
    match size {
        Some(s) if s >= 1.0 => None,
        _ => Some((RiskCategory::VeryLow, "VL")),
    }
}

// ---- sampling ----

fn cat(v: &str) -> AttributeValue {
    AttributeValue::Categorical(v.to_string())
}

fn tenths_between(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> u32 {
    let lo = (lo * 10.0).round() as u32;
    let hi = (hi * 10.0).round() as u32;
    rng.gen_range(lo.max(1)..=hi.max(lo.max(1)))
}

fn length(tenths: u32) -> AttributeValue {
    AttributeValue::length_cm(f64::from(tenths) / 10.0).expect("sampled length in range")
}

fn tenths_of(r: &FeatureRecord, c: Category) -> Option<u32> {
    r.number(c).map(|v| (v * 10.0).round() as u32)
}

const NON_AGGRESSIVE: [&str; 8] = [
    "CribriformMorular",
    "FollicularInfiltrative",
    "FollicularEncapsulated",
    "Encapsulated",
    "InfiltrativeFollicular",
    "WarthinLike",
    "Oncocytic",
    "Classic",
];

fn histology(rng: &mut ChaCha8Rng, size_tenths: u32, aggressive: bool) -> &'static str {
    if aggressive {
        return AGGRESSIVE.choose(rng).expect("non-empty");
    }
    if size_tenths < 10 && rng.gen_bool(0.4) {
        return "Microcarcinoma";
    }
    if rng.gen_bool(0.6) {
        "Classic"
    } else {
        NON_AGGRESSIVE.choose(rng).expect("non-empty")
    }
}

fn t_code(size_tenths: u32, ete: &str) -> &'static str {
    match (ete, size_tenths) {
        ("Macroscopic", _) => "T4",
        (_, 0..=20) => "T1",
        (_, 21..=40) => "T2",
        _ => "T3",
    }
}

/// Fields that live outside the core set and may go unreported.
const CONDITIONAL: [&[Category]; 6] = [
    &[Category::LymphaticInvasion],
    &[Category::LymphovascularInvasion],
    &[
        Category::NumberOfLymphNodesInvolved,
        Category::NumberOfLymphNodesExamined,
    ],
    &[Category::SizeOfLargestMetastaticDeposit],
    &[Category::ExtranodalExtension],
    &[Category::DistantMetastasis],
];

/// One record drawn from `d`.
pub fn sample_record(rng: &mut ChaCha8Rng, d: &Distributions, doc_id: &str) -> FeatureRecord {
    use Category::*;
    let size = tenths_between(rng, d.size_cm.0, d.size_cm.1);
    let aggressive = rng.gen_bool(d.aggressive_histology);
    let procedure = *[
        "TotalThyroidectomy",
        "TotalThyroidectomy",
        "TotalThyroidectomy",
        "Hemithyroidectomy",
        "Hemithyroidectomy",
        "SubtotalThyroidectomy",
        "Isthmusectomy",
    ]
    .choose(rng)
    .expect("non-empty");
    let site = *["RightLobe", "RightLobe", "LeftLobe", "LeftLobe", "Isthmus"]
        .choose(rng)
        .expect("non-empty");
    let u: f64 = rng.gen();
    let ete = if u < d.ete_macroscopic {
        "Macroscopic"
    } else if u < d.ete_macroscopic + d.ete_moderate_severe {
        "MicroscopicModerateSevere"
    } else if u < d.ete_macroscopic + d.ete_moderate_severe + d.ete_minimal {
        "MicroscopicMinimal"
    } else {
        "Negative"
    };
    let posneg = |b: bool| if b { "Positive" } else { "Negative" };

    let mut r = FeatureRecord::new(doc_id)
        .with(Procedure, cat(procedure))
        .with(TumorFocality, cat(if rng.gen_bool(d.multifocal) { "Multifocal" } else { "Unifocal" }))
        .with(TumorSite, cat(site))
        .with(TumorSize, length(size))
        .with(HistologicSubtype, cat(histology(rng, size, aggressive)))
        .with(Margins, cat(posneg(rng.gen_bool(d.margins_positive))))
        .with(Angioinvasion, cat(posneg(rng.gen_bool(d.angioinvasion))))
        .with(LymphaticInvasion, cat(posneg(rng.gen_bool(d.lymphatic_invasion))))
        .with(ExtrathyroidalExtension, cat(ete));
    if rng.gen_bool(d.lvi_reported) {
        r.set(LymphovascularInvasion, cat(posneg(rng.gen_bool(d.lvi_positive))))
            .expect("categorical");
    }

    let mut n_code = "NX";
    if rng.gen_bool(d.nodes_sampled) {
        let involved = if rng.gen_bool(d.node_positive) {
            rng.gen_range(d.nodes_involved.0..=d.nodes_involved.1)
        } else {
            0
        };
        let examined =
            involved + rng.gen_range(d.nodes_uninvolved.0..=d.nodes_uninvolved.1).max(1);
        r.set(NumberOfLymphNodesInvolved, AttributeValue::Count(involved))
            .expect("count");
        r.set(NumberOfLymphNodesExamined, AttributeValue::Count(examined))
            .expect("count");
        n_code = "N0";
        if involved > 0 {
            n_code = "N1";
            let deposit = tenths_between(rng, d.deposit_cm.0, d.deposit_cm.1);
            r.set(SizeOfLargestMetastaticDeposit, length(deposit))
                .expect("length");
            r.set(ExtranodalExtension, cat(posneg(rng.gen_bool(d.extranodal_extension))))
                .expect("categorical");
        }
    }
    let m = if rng.gen_bool(d.distant_metastasis) {
        "M1"
    } else if rng.gen_bool(d.m_reported) {
        "M0"
    } else {
        "MX"
    };
    let edition = if rng.gen_bool(d.eighth_edition) { 8 } else { 7 };
    r.with(PathologicStaging, AttributeValue::staging(edition).expect("edition"))
        .with(PrimaryTumorTNM, AttributeValue::tnm(t_code(size, ete)).expect("tnm"))
        .with(LymphNodesTNM, AttributeValue::tnm(n_code).expect("tnm"))
        .with(DistantMetastasis, AttributeValue::tnm(m).expect("tnm"))
}

// ---- surfaces ----

type Surfaces = (&'static [&'static str], &'static [&'static str]);

/// (in-lexicon surfaces, canonical first; surfaces the lexicon lacks).
fn surfaces(category: Category, value: &str) -> Surfaces {
    use Category::*;
    match (category, value) {
        (Procedure, "TotalThyroidectomy") => (
            &["total thyroidectomy", "near-total thyroidectomy"],
            &["complete thyroid resection"],
        ),
        (Procedure, "SubtotalThyroidectomy") => {
            (&["subtotal thyroidectomy"], &["partial thyroid resection"])
        }
        (Procedure, "Hemithyroidectomy") => (
            &["hemithyroidectomy", "right lobectomy", "left lobectomy"],
            &["thyroid lobe resection"],
        ),
        (Procedure, "Isthmusectomy") => (&["isthmusectomy"], &[]),
        (TumorFocality, "Multifocal") => (&["multifocal"], &["multiple foci"]),
        (TumorFocality, "Unifocal") => (&["unifocal"], &["single focus"]),
        (TumorSite, "RightLobe") => (&["right lobe", "right thyroid lobe"], &["right side"]),
        (TumorSite, "LeftLobe") => (&["left lobe", "left thyroid lobe"], &["left side"]),
        (TumorSite, "Isthmus") => (&["isthmus"], &[]),
        (HistologicSubtype, "TallCell") => (&["tall cell variant", "tall cell"], &["tall-cell subtype"]),
        (HistologicSubtype, "Hobnail") => (&["hobnail variant", "hobnail"], &[]),
        (HistologicSubtype, "ColumnarCell") => (
            &["columnar cell variant", "columnar cell"],
            &["columnar-cell subtype"],
        ),
        (HistologicSubtype, "SolidTrabecular") => (
            &["solid/trabecular variant", "solid / trabecular variant"],
            &["solid-trabecular subtype"],
        ),
        (HistologicSubtype, "DiffuseSclerosing") => (
            &["diffuse sclerosing variant", "diffuse sclerosing"],
            &["diffuse-sclerosing subtype"],
        ),
        (HistologicSubtype, "CribriformMorular") => (&["cribriform-morular variant"], &[]),
        (HistologicSubtype, "FollicularInfiltrative") => (&["follicular variant, infiltrative"], &[]),
        (HistologicSubtype, "FollicularEncapsulated") => (&["follicular variant, encapsulated"], &[]),
        (HistologicSubtype, "Encapsulated") => (&["encapsulated variant"], &[]),
        (HistologicSubtype, "InfiltrativeFollicular") => (&["infiltrative follicular"], &[]),
        (HistologicSubtype, "WarthinLike") => (&["warthin-like variant", "warthin-like"], &[]),
        (HistologicSubtype, "Oncocytic") => (&["oncocytic variant", "oncocytic"], &[]),
        (HistologicSubtype, "Classic") => (
            &["classic", "classic variant", "conventional"],
            &["not otherwise specified"],
        ),
        (HistologicSubtype, "Microcarcinoma") => (&["microcarcinoma"], &[]),
        (Margins, "Positive") => (
            &["involved by carcinoma", "carcinoma present at margin"],
            &["tumor at ink"],
        ),
        (Margins, "Negative") => (
            &["uninvolved by carcinoma", "negative", "free of tumor"],
            &["clear"],
        ),
        (Angioinvasion, "Positive") => (&["present", "identified", "positive"], &["seen"]),
        (Angioinvasion, "Negative") => (&["not identified", "negative"], &["not seen"]),
        (LymphaticInvasion | LymphovascularInvasion, "Positive") => {
            (&["present", "identified", "positive"], &["seen"])
        }
        (LymphaticInvasion | LymphovascularInvasion, "Negative") => {
            (&["not identified", "negative", "absent"], &["not seen"])
        }
        (ExtranodalExtension, "Positive") => (&["present", "identified"], &["seen"]),
        (ExtranodalExtension, "Negative") => (&["not identified", "absent"], &["not seen"]),
        (ExtrathyroidalExtension, "Negative") => (&["not identified"], &["confined to the thyroid"]),
        (ExtrathyroidalExtension, "MicroscopicMinimal") => (
            &["microscopic minimal", "perithyroidal adipose tissue", "strap muscles"],
            &["focal extension"],
        ),
        (ExtrathyroidalExtension, "MicroscopicModerateSevere") => (
            &[
                "microscopic moderate/severe",
                "subcutaneous tissue",
                "trachea",
                "esophagus",
            ],
            &[],
        ),
        (ExtrathyroidalExtension, "Macroscopic") => (&["macroscopic"], &["gross"]),
        _ => (&[], &[]),
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

// ---- rendering ----

/// Text under construction with gold mentions in byte offsets.
#[derive(Default)]
struct Draft {
    text: String,
    gold: Vec<(Category, usize, usize, AttributeValue)>,
}

impl Draft {
    fn push(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self
    }

    fn value(&mut self, category: Category, surface: &str, value: AttributeValue) -> &mut Self {
        let start = self.text.len();
        self.text.push_str(surface);
        self.gold.push((category, start, self.text.len(), value));
        self
    }

    fn append(&mut self, other: Draft) {
        let base = self.text.len();
        self.text.push_str(&other.text);
        self.gold
            .extend(other.gold.into_iter().map(|(c, s, e, v)| (c, base + s, base + e, v)));
    }
}

struct Renderer<'a> {
    rng: &'a mut ChaCha8Rng,
    noise: &'a NoiseConfig,
    structured: bool,
}

impl Renderer<'_> {
    fn surface(&mut self, category: Category, value: &str) -> String {
        let (listed, unlisted) = surfaces(category, value);
        let out_of_lexicon = self.rng.gen_bool(self.noise.out_of_lexicon);
        let synonym = self.rng.gen_bool(self.noise.synonym);
        let s = if out_of_lexicon && !unlisted.is_empty() {
            unlisted.choose(self.rng).expect("non-empty")
        } else if synonym && listed.len() > 1 {
            listed[1..].choose(self.rng).expect("non-empty")
        } else {
            listed.first().copied().unwrap_or(value)
        };
        if self.structured {
            capitalize(s)
        } else {
            s.to_string()
        }
    }

    /// `dims` in tenths of a cm, greatest first.
    fn quantity(&mut self, dims: &[u32]) -> String {
        let mm = self.rng.gen_bool(self.noise.mm_units);
        let parts: Vec<String> = dims
            .iter()
            .map(|&t| {
                if mm {
                    t.to_string()
                } else {
                    format!("{}.{}", t / 10, t % 10)
                }
            })
            .collect();
        format!("{} {}", parts.join(" x "), if mm { "mm" } else { "cm" })
    }

    fn minor_dims(&mut self, greatest: u32) -> Vec<u32> {
        let a = self.rng.gen_range(1..=greatest);
        let b = self.rng.gen_range(1..=a);
        vec![greatest, a, b]
    }

    fn categorical(&mut self, d: &mut Draft, r: &FeatureRecord, c: Category) -> bool {
        match r.code(c) {
            Some(v) => {
                let s = self.surface(c, v);
                d.value(c, &s, cat(v));
                true
            }
            None => false,
        }
    }
}

fn staging_surface(r: &FeatureRecord) -> Option<(String, AttributeValue)> {
    match r.get(Category::PathologicStaging)? {
        AttributeValue::Staging(e) => Some((format!("{e}th edition"), AttributeValue::Staging(*e))),
        _ => None,
    }
}

fn n_surface(r: &FeatureRecord, code: &str) -> String {
    match code {
        "N1" if r.number(Category::NumberOfLymphNodesInvolved).is_some_and(|n| n > 5.0) => "N1b".into(),
        "N1" => "N1a".into(),
        other => other.to_string(),
    }
}

fn m_surface(code: &str, structured: bool) -> &'static str {
    match (code, structured) {
        ("M1", _) => "pM1",
        ("M0", _) => "cM0",
        (_, true) => "Not applicable",
        _ => "not applicable",
    }
}

fn render_structured(rd: &mut Renderer<'_>, r: &FeatureRecord) -> Draft {
    use Category::*;
    let mut blocks: Vec<Draft> = Vec::new();
    let simple = |rd: &mut Renderer<'_>, header: &str, c: Category| -> Option<Draft> {
        let mut d = Draft::default();
        d.push(" ").push(header).push(": ");
        rd.categorical(&mut d, r, c).then(|| {
            d.push(".\n");
            d
        })
    };
    blocks.extend(simple(rd, "Procedure", Procedure));
    blocks.extend(simple(rd, "Tumor Focality", TumorFocality));
    blocks.extend(simple(rd, "Tumor Site", TumorSite));
    if let Some(t) = tenths_of(r, TumorSize) {
        let mut d = Draft::default();
        let dims = if rd.rng.gen_bool(rd.noise.synonym) {
            rd.minor_dims(t)
        } else {
            vec![t]
        };
        let q = rd.quantity(&dims);
        d.push(" Tumor Size: Greatest dimension: ")
            .value(TumorSize, &q, length(t))
            .push(".\n");
        blocks.push(d);
    }
    if let Some(h) = r.code(HistologicSubtype) {
        let mut d = Draft::default();
        let s = rd.surface(HistologicSubtype, h);
        if h == "Microcarcinoma" {
            d.push(" Histologic Type: ");
            d.value(HistologicSubtype, &format!("Papillary {}", s.to_lowercase()), cat(h));
        } else {
            d.push(" Histologic Type: Papillary carcinoma, ");
            d.value(HistologicSubtype, &s.to_lowercase(), cat(h));
        }
        d.push(".\n");
        blocks.push(d);
    }
    blocks.extend(simple(rd, "Margins", Margins));
    blocks.extend(simple(rd, "Angioinvasion (Vascular Invasion)", Angioinvasion));
    blocks.extend(simple(rd, "Lymphatic Invasion", LymphaticInvasion));
    blocks.extend(simple(rd, "Lymphovascular Invasion", LymphovascularInvasion));
    if let Some(e) = r.code(ExtrathyroidalExtension) {
        let mut d = Draft::default();
        d.push(" Extrathyroidal Extension: ");
        let s = rd.surface(ExtrathyroidalExtension, e);
        if e == "Negative" {
            d.value(ExtrathyroidalExtension, &s, cat(e));
        } else {
            d.push("Present, ")
                .value(ExtrathyroidalExtension, &s.to_lowercase(), cat(e));
        }
        d.push(".\n");
        blocks.push(d);
    }
    let involved = r.get(NumberOfLymphNodesInvolved).and_then(AttributeValue::as_count);
    let examined = r.get(NumberOfLymphNodesExamined).and_then(AttributeValue::as_count);
    if involved.is_some() || examined.is_some() {
        let mut d = Draft::default();
        d.push(" Regional Lymph Nodes\n");
        if let Some(k) = involved {
            d.push(" Number of Lymph Nodes Involved: ")
                .value(NumberOfLymphNodesInvolved, &k.to_string(), AttributeValue::Count(k))
                .push(".\n");
            if k > 0 {
                d.push(" Level VI, levels IIA, IIB, III and IV.\n");
            }
        }
        if let Some(n) = examined {
            d.push(" Number of Lymph Nodes Examined: ")
                .value(NumberOfLymphNodesExamined, &n.to_string(), AttributeValue::Count(n))
                .push(".\n Level VI, levels II-IV, paraesophageal.\n");
        }
        blocks.push(d);
    }
    if let Some(t) = tenths_of(r, SizeOfLargestMetastaticDeposit) {
        let mut d = Draft::default();
        let q = rd.quantity(&[t]);
        d.push(" Size of Largest Metastatic Deposit: ")
            .value(SizeOfLargestMetastaticDeposit, &q, length(t))
            .push(".\n");
        blocks.push(d);
    }
    blocks.extend(simple(rd, "Extranodal Extension", ExtranodalExtension));
    if let Some((s, v)) = staging_surface(r) {
        let mut d = Draft::default();
        d.push(" Pathologic Staging (AJCC, ")
            .value(PathologicStaging, &s, v)
            .push(")\n TNM Descriptors: Not applicable.\n");
        blocks.push(d);
    }
    if let Some(t) = r.code(PrimaryTumorTNM) {
        let mut d = Draft::default();
        d.push(" Primary Tumor: ")
            .value(PrimaryTumorTNM, &format!("p{t}"), cat_tnm(t))
            .push(".\n");
        blocks.push(d);
    }
    if let Some(n) = r.code(LymphNodesTNM) {
        let mut d = Draft::default();
        d.push(" Regional lymph nodes: ")
            .value(LymphNodesTNM, &format!("p{}", n_surface(r, n)), cat_tnm(n))
            .push(".\n");
        blocks.push(d);
    }
    if let Some(m) = r.code(DistantMetastasis) {
        let mut d = Draft::default();
        d.push(" Distant Metastasis: ")
            .value(DistantMetastasis, m_surface(m, true), cat_tnm(m))
            .push(".\n");
        blocks.push(d);
    }
    if rd.rng.gen_bool(rd.noise.header_reorder) {
        blocks.shuffle(rd.rng);
    }
    let mut out = Draft::default();
    out.push("SYNOPTIC REPORT\n");
    for b in blocks {
        out.append(b);
    }
    out
}

fn cat_tnm(code: &str) -> AttributeValue {
    AttributeValue::tnm(code).expect("valid tnm code")
}

fn sentence(rd: &mut Renderer<'_>, d: &mut Draft, r: &FeatureRecord, lead: &str, c: Category) {
    if r.is_populated(c) {
        d.push(" ").push(lead).push(" is ");
        rd.categorical(d, r, c);
        d.push(".");
    }
}

fn render_narrative(rd: &mut Renderer<'_>, r: &FeatureRecord) -> Draft {
    use Category::*;
    let mut d = Draft::default();
    if rd.rng.gen_bool(rd.noise.distractor) {
        d.push("CLINICAL HISTORY: ");
        match rd.rng.gen_range(0..3) {
            0 => {
                let side = if r.code(TumorSite) == Some("LeftLobe") { "right" } else { "left" };
                d.push(&format!("Nodule in the {side} lobe on prior imaging."));
            }
            1 => {
                let g = rd.rng.gen_range(30..=70);
                let dims = rd.minor_dims(g);
                let q = rd.quantity(&dims);
                d.push(&format!("Gross description: the specimen measures {q} in greatest dimension."));
            }
            _ => {
                d.push("Prior biopsy was concerning for tall cell features.");
            }
        }
        d.push("\n\n");
    }
    d.push("DIAGNOSIS:\n\nA. Thyroid, ");
    if !rd.categorical(&mut d, r, Procedure) {
        d.push("resection");
    }
    d.push(": Papillary thyroid ");
    match r.code(HistologicSubtype) {
        Some("Microcarcinoma") => {
            let s = rd.surface(HistologicSubtype, "Microcarcinoma");
            d.value(HistologicSubtype, &s, cat("Microcarcinoma"));
        }
        Some(h) => {
            d.push("carcinoma, ");
            let s = rd.surface(HistologicSubtype, h);
            d.value(HistologicSubtype, &s, cat(h));
        }
        None => {
            d.push("carcinoma");
        }
    }
    if r.is_populated(TumorFocality) {
        d.push(", ");
        rd.categorical(&mut d, r, TumorFocality);
    }
    let size = tenths_of(r, TumorSize);
    let hard_size = size.is_some() && rd.rng.gen_bool(rd.noise.hard_phrasing);
    if let (Some(t), false) = (size, hard_size) {
        let second = (r.code(TumorFocality) == Some("Multifocal") && t >= 2)
            .then(|| rd.rng.gen_range(1..t));
        let dims = rd.minor_dims(t);
        let q = rd.quantity(&dims);
        match second {
            Some(s) => {
                let dims2 = rd.minor_dims(s);
                let q2 = rd.quantity(&dims2);
                d.push(", forming two nodules (")
                    .value(TumorSize, &q, length(t))
                    .push(" and ")
                    .value(TumorSize, &q2, length(s))
                    .push(")");
            }
            None => {
                d.push(", forming a nodule (")
                    .value(TumorSize, &q, length(t))
                    .push(")");
            }
        }
    } else {
        d.push(",");
    }
    if r.is_populated(TumorSite) {
        d.push(" located in the ");
        rd.categorical(&mut d, r, TumorSite);
    }
    d.push(".");
    if let (Some(t), true) = (size, hard_size) {
        let q = rd.quantity(&[t]);
        d.push(" The lesion spans ").value(TumorSize, &q, length(t)).push(".");
    }
    if let Some(e) = r.code(ExtrathyroidalExtension) {
        let s = rd.surface(ExtrathyroidalExtension, e);
        if s == "confined to the thyroid" {
            d.push(" Tumor is ").value(ExtrathyroidalExtension, &s, cat(e)).push(".");
        } else if e == "Negative" {
            d.push(" Extrathyroidal extension is ")
                .value(ExtrathyroidalExtension, &s, cat(e))
                .push(".");
        } else {
            d.push(" Extrathyroidal extension is present (")
                .value(ExtrathyroidalExtension, &s, cat(e))
                .push(").");
        }
    }
    match r.code(Margins) {
        Some("Positive") if rd.rng.gen_bool(rd.noise.hard_phrasing) => {
            d.push(" Carcinoma ")
                .value(Margins, "extends to the inked margin", cat("Positive"))
                .push(".");
        }
        Some("Negative") if rd.rng.gen_bool(rd.noise.hard_phrasing) => {
            d.push(" The inked margins are ").value(Margins, "clear", cat("Negative")).push(".");
        }
        Some(_) => {
            d.push(" The surgical resection margins are ");
            rd.categorical(&mut d, r, Margins);
            d.push(".");
        }
        None => {}
    }
    sentence(rd, &mut d, r, "Angioinvasion", Angioinvasion);
    sentence(rd, &mut d, r, "Lymphatic invasion", LymphaticInvasion);
    sentence(rd, &mut d, r, "Lymphovascular invasion", LymphovascularInvasion);

    let involved = r.get(NumberOfLymphNodesInvolved).and_then(AttributeValue::as_count);
    let examined = r.get(NumberOfLymphNodesExamined).and_then(AttributeValue::as_count);
    let deposit = tenths_of(r, SizeOfLargestMetastaticDeposit);
    if involved.is_some() || examined.is_some() || deposit.is_some() || r.is_populated(ExtranodalExtension) {
        d.push("\n\nB. Lymph nodes, central neck, dissection:");
        let count = |d: &mut Draft, c: Category, k: u32| {
            d.value(c, &k.to_string(), AttributeValue::Count(k));
        };
        match (involved, examined) {
            (Some(k), Some(n)) if k > 0 && rd.rng.gen_bool(rd.noise.hard_phrasing) => {
                d.push(" Metastatic carcinoma is seen in ");
                count(&mut d, NumberOfLymphNodesInvolved, k);
                d.push(" of ");
                count(&mut d, NumberOfLymphNodesExamined, n);
                d.push(" nodes.");
            }
            (Some(k), Some(n)) if k > 0 && rd.rng.gen_bool(0.5) => {
                d.push(if k == 1 { " A single (" } else { " Multiple (" });
                count(&mut d, NumberOfLymphNodesInvolved, k);
                d.push(" of ");
                count(&mut d, NumberOfLymphNodesExamined, n);
                d.push(if k == 1 {
                    ") lymph node is positive for metastatic carcinoma."
                } else {
                    ") lymph nodes are positive for metastatic carcinoma."
                });
            }
            _ => {
                if let Some(k) = involved {
                    d.push(" Number of lymph nodes involved: ");
                    count(&mut d, NumberOfLymphNodesInvolved, k);
                    d.push(".");
                }
                if let Some(n) = examined {
                    d.push(" Number of lymph nodes examined: ");
                    count(&mut d, NumberOfLymphNodesExamined, n);
                    d.push(".");
                }
            }
        }
        if let Some(t) = deposit {
            let q = rd.quantity(&[t]);
            if rd.rng.gen_bool(rd.noise.hard_phrasing) {
                d.push(" The biggest nodal focus is ");
            } else {
                d.push(" The largest metastasis measures ");
            }
            d.value(SizeOfLargestMetastaticDeposit, &q, length(t)).push(".");
        }
        match r.code(ExtranodalExtension) {
            Some("Positive") if rd.rng.gen_bool(rd.noise.hard_phrasing) => {
                d.push(" Tumor ")
                    .value(ExtranodalExtension, "breaches the nodal capsule", cat("Positive"))
                    .push(".");
            }
            Some("Negative") if rd.rng.gen_bool(rd.noise.hard_phrasing) => {
                d.push(" The nodal capsule is ")
                    .value(ExtranodalExtension, "intact", cat("Negative"))
                    .push(".");
            }
            _ => sentence(rd, &mut d, r, "Extranodal extension", ExtranodalExtension),
        }
    }

    let t = r.code(PrimaryTumorTNM);
    let n = r.code(LymphNodesTNM);
    let staging = staging_surface(r);
    if t.is_some() || n.is_some() || staging.is_some() {
        d.push("\n\n");
        if t.is_some() || n.is_some() {
            d.push("[AJCC ");
            match t {
                Some(t) => {
                    d.value(PrimaryTumorTNM, &format!("p{t}"), cat_tnm(t));
                    if let Some(n) = n {
                        d.value(LymphNodesTNM, &n_surface(r, n), cat_tnm(n));
                    }
                }
                None => {
                    let n = n.expect("checked");
                    d.value(LymphNodesTNM, &format!("p{}", n_surface(r, n)), cat_tnm(n));
                }
            }
            d.push("]");
        }
        if let Some((s, v)) = staging {
            d.push(" (").value(PathologicStaging, &s, v).push(")");
        }
        d.push(".");
    }
    if let Some(m) = r.code(DistantMetastasis) {
        d.push(" Distant metastasis: ")
            .value(DistantMetastasis, m_surface(m, false), cat_tnm(m))
            .push(".");
    }
    d.push("\n");
    d
}

/// Widens some gold spans over the preceding word, the way annotators
/// disagree on boundaries. Never creates overlaps.
fn jitter(rng: &mut ChaCha8Rng, rate: f64, d: &mut Draft) {
    for i in 0..d.gold.len() {
        if !rng.gen_bool(rate) {
            continue;
        }
        let (_, s, e, _) = d.gold[i];
        let Some(before) = d.text[..s].strip_suffix(' ') else {
            continue;
        };
        let ws = before
            .rfind(char::is_whitespace)
            .map_or(0, |p| p + before[p..].chars().next().map_or(1, char::len_utf8));
        if ws >= before.len() {
            continue;
        }
        let clash = d
            .gold
            .iter()
            .enumerate()
            .any(|(j, g)| j != i && g.1 < e && ws < g.2);
        if !clash {
            d.gold[i].1 = ws;
        }
    }
}

/// Rendered text with gold mentions in character spans, sorted by start.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub mentions: Vec<Mention>,
}

/// Renders `record`; every populated slot yields at least one mention.
pub fn render(
    record: &FeatureRecord,
    format: ReportFormat,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> Rendered {
    let structured = format == ReportFormat::Structured;
    let mut draft = {
        let mut rd = Renderer {
            rng,
            noise,
            structured,
        };
        if structured {
            render_structured(&mut rd, record)
        } else {
            render_narrative(&mut rd, record)
        }
    };
    jitter(rng, noise.boundary_jitter, &mut draft);
    let index = TextIndex::new(&draft.text);
    let mut mentions: Vec<Mention> = draft
        .gold
        .iter()
        .map(|(c, s, e, v)| Mention {
            category: *c,
            surface: draft.text[*s..*e].to_string(),
            span: index.span_of_bytes(*s, *e),
            value: v.clone(),
        })
        .collect();
    mentions.sort_by_key(|m| (m.span.start, m.span.end));
    Rendered {
        text: draft.text,
        mentions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    pub document: ReportDocument,
    pub gold: GoldAnnotation,
    /// The record the text was rendered from, after dropped fields.
    pub record: FeatureRecord,
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticCorpus {
    pub cases: Vec<SyntheticCase>,
}

impl SyntheticCorpus {
    pub fn documents(&self) -> Vec<ReportDocument> {
        self.cases.iter().map(|c| c.document.clone()).collect()
    }

    pub fn gold(&self) -> Vec<GoldAnnotation> {
        self.cases.iter().map(|c| c.gold.clone()).collect()
    }

    pub fn corpus_jsonl(&self) -> String {
        corpus_to_string(&self.documents())
    }

    pub fn gold_jsonl(&self) -> String {
        gold_to_string(&self.gold())
    }
}

/// Deterministic in `config`; documents draw from independent per-document
/// streams seeded from the master seed.
pub fn generate_synthetic(config: &GeneratorConfig) -> Result<SyntheticCorpus, SynthError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cases = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let format = if rng.gen_bool(config.structured_fraction) {
            ReportFormat::Structured
        } else {
            ReportFormat::Unstructured
        };
        let id = format!("synth-{}-{i:05}", config.seed);
        let mut record = sample_record(&mut rng, &config.distributions, &id);
        for group in CONDITIONAL {
            if rng.gen_bool(config.noise.drop_conditional) {
                for c in group {
                    record.clear(*c);
                }
            }
        }
        let rendered = render(&record, format, &config.noise, &mut rng);
        let hint = match format {
            ReportFormat::Structured => FormatHint::Structured,
            ReportFormat::Unstructured => FormatHint::Unstructured,
        };
        cases.push(SyntheticCase {
            document: ReportDocument::new(id.clone(), rendered.text, hint),
            gold: GoldAnnotation {
                doc_id: id,
                mentions: rendered.mentions,
                risk: oracle_risk(&record).map(|(tier, _)| tier),
            },
            record,
            format,
        });
    }
    Ok(SyntheticCorpus { cases })
}

// ---- engineered cohort ----

/// Target first-trigger counts, keyed by rule id (`"VL"` for the
/// fall-through).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMix {
    pub entries: Vec<(String, usize)>,
}

pub fn rule_tier(rule_id: &str) -> Option<RiskCategory> {
    match rule_id {
        "H1" | "H2" | "H3" | "H4" => Some(RiskCategory::High),
        "I1" | "I2" | "I3" | "I4" | "I5" | "I6" => Some(RiskCategory::Intermediate),
        "L1" | "L2" | "L3" | "L4" => Some(RiskCategory::Low),
        "VL" => Some(RiskCategory::VeryLow),
        _ => None,
    }
}

impl CohortMix {
    /// The 270-report attribute mix of the development cohort.
    pub fn reference() -> CohortMix {
        let e = [
            ("H1", 21),
            ("H2", 12),
            ("H3", 1),
            ("H4", 1),
            ("I1", 26),
            ("I2", 17),
            ("I3", 7),
            ("I4", 4),
            ("I5", 4),
            ("L1", 116),
            ("L2", 27),
            ("L3", 2),
            ("L4", 1),
            ("VL", 31),
        ];
        CohortMix {
            entries: e.iter().map(|(id, n)| (id.to_string(), *n)).collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn tier_total(&self, tier: RiskCategory) -> usize {
        self.entries
            .iter()
            .filter(|(id, _)| rule_tier(id) == Some(tier))
            .map(|e| e.1)
            .sum()
    }

    /// Share of `rule_id` within its tier, in percent.
    pub fn percent(&self, rule_id: &str) -> f64 {
        let Some(tier) = rule_tier(rule_id) else {
            return 0.0;
        };
        let total = self.tier_total(tier);
        let n = self
            .entries
            .iter()
            .find(|(id, _)| id == rule_id)
            .map_or(0, |e| e.1);
        if total == 0 {
            0.0
        } else {
            100.0 * n as f64 / total as f64
        }
    }

    /// Same proportions at size `n`, by largest remainder.
    pub fn scaled(&self, n: usize) -> CohortMix {
        let total = self.total();
        if total == 0 {
            return self.clone();
        }
        let quotas: Vec<f64> = self
            .entries
            .iter()
            .map(|e| e.1 as f64 * n as f64 / total as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let short = n - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        CohortMix {
            entries: self
                .entries
                .iter()
                .zip(counts)
                .map(|((id, _), c)| (id.clone(), c))
                .collect(),
        }
    }
}

/// Quiet baseline: under 1 cm, nothing fires.
fn baseline(rng: &mut ChaCha8Rng, id: &str) -> FeatureRecord {
    use Category::*;
    let size = rng.gen_range(2..=9);
    FeatureRecord::new(id)
        .with(Procedure, cat("TotalThyroidectomy"))
        .with(TumorFocality, cat("Unifocal"))
        .with(TumorSite, cat(if rng.gen_bool(0.5) { "RightLobe" } else { "LeftLobe" }))
        .with(TumorSize, length(size))
        .with(HistologicSubtype, cat(histology(rng, size, false)))
        .with(Margins, cat("Negative"))
        .with(Angioinvasion, cat("Negative"))
        .with(ExtrathyroidalExtension, cat("Negative"))
        .with(DistantMetastasis, cat_tnm("M0"))
}

fn set_nodes(r: &mut FeatureRecord, rng: &mut ChaCha8Rng, lo: u32, hi: u32) {
    let involved = rng.gen_range(lo..=hi);
    r.set(Category::NumberOfLymphNodesInvolved, AttributeValue::Count(involved))
        .expect("count");
    r.set(
        Category::NumberOfLymphNodesExamined,
        AttributeValue::Count(involved + rng.gen_range(0..=20)),
    )
    .expect("count");
}

fn set(r: &mut FeatureRecord, c: Category, v: AttributeValue) {
    r.set(c, v).expect("kind matches");
}

/// A record whose first trigger is `rule_id`.
fn engineered(rng: &mut ChaCha8Rng, rule_id: &str, id: &str) -> Result<FeatureRecord, SynthError> {
    use Category::*;
    let mut r = baseline(rng, id);
    let tier = rule_tier(rule_id).ok_or_else(|| SynthError::UnknownRule(rule_id.to_string()))?;
    // Lower-tier colour that cannot outrank the primary rule.
    if tier == RiskCategory::High {
        set(&mut r, TumorSize, length(rng.gen_range(2..=60)));
        if rng.gen_bool(0.3) {
            set(&mut r, Angioinvasion, cat("Positive"));
        }
    }
    match rule_id {
        "H1" => {
            set_nodes(&mut r, rng, 1, 30);
            set(&mut r, SizeOfLargestMetastaticDeposit, length(rng.gen_range(1..=60)));
            set(&mut r, ExtranodalExtension, cat("Positive"));
        }
        "H2" => {
            set_nodes(&mut r, rng, 1, 30);
            set(&mut r, SizeOfLargestMetastaticDeposit, length(rng.gen_range(31..=60)));
            set(&mut r, ExtranodalExtension, cat("Negative"));
        }
        "H3" => set(&mut r, DistantMetastasis, cat_tnm("M1")),
        "H4" => set(&mut r, ExtrathyroidalExtension, cat("Macroscopic")),
        "I1" => {
            set_nodes(&mut r, rng, 6, 30);
            set(&mut r, TumorSize, length(rng.gen_range(2..=60)));
        }
        "I2" => set(&mut r, TumorSize, length(rng.gen_range(41..=60))),
        "I3" => {
            set(&mut r, TumorSize, length(rng.gen_range(2..=40)));
            set(&mut r, Angioinvasion, cat("Positive"));
        }
        "I4" => {
            set_nodes(&mut r, rng, 1, 5);
            set(&mut r, SizeOfLargestMetastaticDeposit, length(rng.gen_range(10..=30)));
            set(&mut r, ExtranodalExtension, cat("Negative"));
        }
        "I5" => {
            let size = rng.gen_range(2..=40);
            set(&mut r, TumorSize, length(size));
            set(&mut r, HistologicSubtype, cat(histology(rng, size, true)));
        }
        "I6" => set(&mut r, ExtrathyroidalExtension, cat("MicroscopicModerateSevere")),
        "L1" => {
            set(&mut r, TumorSize, length(rng.gen_range(10..=40)));
            if rng.gen_bool(0.3) {
                set_nodes(&mut r, rng, 1, 5);
            }
        }
        "L2" => set_nodes(&mut r, rng, 1, 5),
        "L3" => set(&mut r, ExtrathyroidalExtension, cat("MicroscopicMinimal")),
        "L4" => set(&mut r, SizeOfLargestMetastaticDeposit, length(rng.gen_range(1..=9))),
        "VL" => {}
        other => return Err(SynthError::UnknownRule(other.to_string())),
    }
    match oracle_risk(&r) {
        Some((t, first)) if t == tier && first == rule_id => Ok(r),
        got => Err(SynthError::Config(format!(
            "engineered record for {rule_id} evaluates to {got:?}"
        ))),
    }
}

/// Records whose first-trigger distribution equals `mix` exactly.
pub fn engineered_cohort(seed: u64, mix: &CohortMix) -> Result<Vec<FeatureRecord>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(mix.total());
    for (rule_id, count) in &mix.entries {
        for k in 0..*count {
            let id = format!("cohort-{rule_id}-{k:04}");
            out.push(engineered(&mut rng, rule_id, &id)?);
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, frac: f64, noise: NoiseConfig) -> GeneratorConfig {
        GeneratorConfig {
            seed: 7,
            n,
            structured_fraction: frac,
            noise,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn empty_config_gives_empty_files() {
        let c = generate_synthetic(&config(0, 0.5, NoiseConfig::none())).unwrap();
        assert!(c.corpus_jsonl().is_empty());
        assert!(c.gold_jsonl().is_empty());
    }

    #[test]
    fn invalid_configs() {
        let mut c = config(1, 1.5, NoiseConfig::none());
        assert!(generate_synthetic(&c).is_err());
        c.structured_fraction = 0.5;
        c.noise.synonym = -0.1;
        assert!(generate_synthetic(&c).is_err());
        c.noise.synonym = 0.0;
        c.distributions.size_cm = (3.0, 1.0);
        assert!(generate_synthetic(&c).is_err());
        assert!(NoiseConfig::profile("loud").is_err());
    }

    #[test]
    fn gold_spans_are_consistent() {
        for noise in [NoiseConfig::none(), NoiseConfig::standard()] {
            let c = generate_synthetic(&config(60, 0.5, noise)).unwrap();
            for case in &c.cases {
                case.gold.validate_against(&case.document).unwrap();
                for cat in Category::ALL {
                    if case.record.is_populated(cat) {
                        assert!(
                            case.gold.mentions.iter().any(|m| m.category == cat),
                            "{} lacks {cat:?}:\n{}",
                            case.document.id,
                            case.document.text
                        );
                    }
                }
                assert!(case.gold.risk.is_some());
            }
        }
    }

    #[test]
    fn determinism() {
        let a = generate_synthetic(&config(30, 0.5, NoiseConfig::standard())).unwrap();
        let b = generate_synthetic(&config(30, 0.5, NoiseConfig::standard())).unwrap();
        assert_eq!(a.corpus_jsonl(), b.corpus_jsonl());
        assert_eq!(a.gold_jsonl(), b.gold_jsonl());
    }

    #[test]
    fn oracle_examples() {
        use Category::*;
        let r = FeatureRecord::new("x").with(TumorSize, length(8));
        assert_eq!(oracle_risk(&r), Some((RiskCategory::VeryLow, "VL")));
        let r = r.with(TumorSize, length(25))
            .with(NumberOfLymphNodesInvolved, AttributeValue::Count(3))
            .with(SizeOfLargestMetastaticDeposit, length(4));
        assert_eq!(oracle_risk(&r), Some((RiskCategory::Low, "L1")));
        let r = FeatureRecord::new("x").with(TumorSize, length(50));
        assert_eq!(oracle_risk(&r), Some((RiskCategory::Intermediate, "I2")));
    }

    #[test]
    fn scaled_mix_keeps_total() {
        let m = CohortMix::reference();
        assert_eq!(m.total(), 270);
        assert_eq!(m.tier_total(RiskCategory::Low), 146);
        let s = m.scaled(1000);
        assert_eq!(s.total(), 1000);
        assert!((m.percent("H1") - 60.0).abs() < 0.01);
    }

    #[test]
    fn cohort_hits_every_rule() {
        let mut mix = CohortMix::reference();
        mix.entries.push(("I6".into(), 3));
        let records = engineered_cohort(1, &mix).unwrap();
        assert_eq!(records.len(), 273);
        assert!(engineered_cohort(1, &CohortMix { entries: vec![("Z9".into(), 1)] }).is_err());
    }
}
