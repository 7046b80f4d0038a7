use thyropath::classifier::{classify, Policy, RuleTable};
use thyropath::corpus_io::synth::{generate_synthetic, GeneratorConfig, NoiseConfig};
use thyropath::evaluation::{
    classification_metrics, compute_metrics, confusion, match_mentions, CountTable, MatchMode,
};
use thyropath::{default_lexicon, extract, to_feature_record, DocumentMentions, RiskCategory};

fn config(seed: u64, n: usize, frac: f64, noise: NoiseConfig) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n,
        structured_fraction: frac,
        noise,
        ..GeneratorConfig::default()
    }
}

fn mismatch_report(seed: u64, frac: f64) -> (CountTable, Vec<String>) {
    let lexicon = default_lexicon();
    let corpus = generate_synthetic(&config(seed, 200, frac, NoiseConfig::none())).unwrap();
    let mut total = CountTable::default();
    let mut notes = Vec::new();
    for case in &corpus.cases {
        let mentions = extract(&case.document, &lexicon).unwrap();
        let pred = DocumentMentions {
            doc_id: case.document.id.clone(),
            mentions: mentions.clone(),
        };
        let counts = match_mentions(&case.gold, &pred, MatchMode::Strict).unwrap();
        if counts.pooled().fp + counts.pooled().fn_ > 0 && notes.len() < 3 {
            let gold: Vec<_> = case
                .gold
                .mentions
                .iter()
                .filter(|g| !mentions.contains(g))
                .collect();
            let extra: Vec<_> = mentions
                .iter()
                .filter(|m| !case.gold.mentions.contains(m))
                .collect();
            notes.push(format!(
                "{}\n{}\nmissed: {gold:?}\nspurious: {extra:?}",
                case.document.id, case.document.text
            ));
        }
        total.merge(&counts);
    }
    (total, notes)
}

#[test]
fn clean_structured_extraction_is_exact() {
    let (total, notes) = mismatch_report(11, 1.0);
    for (category, counts) in total.iter() {
        let m = compute_metrics(counts);
        assert!(
            m.f1.is_none_or(|f| f == 1.0),
            "{category:?} {counts:?}\n{}",
            notes.join("\n\n")
        );
    }
    // Every category is exercised by the sampler.
    for (category, counts) in total.iter() {
        assert!(counts.tp > 0, "{category:?} never generated");
    }
}

#[test]
fn clean_narrative_extraction_is_exact() {
    let (total, notes) = mismatch_report(12, 0.0);
    let pooled = total.pooled();
    assert_eq!(pooled.fp + pooled.fn_, 0, "{pooled:?}\n{}", notes.join("\n\n"));
}

#[test]
fn clean_structured_classification_is_exact() {
    let lexicon = default_lexicon();
    let table = RuleTable::standard();
    let corpus = generate_synthetic(&config(13, 200, 1.0, NoiseConfig::none())).unwrap();
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for case in &corpus.cases {
        let mentions = extract(&case.document, &lexicon).unwrap();
        let record = to_feature_record(&case.document, &mentions, &lexicon);
        let a = classify(&record, &table, Policy::Strict).unwrap();
        assert!(a.is_consistent());
        gold.push(case.gold.risk.unwrap());
        pred.push(a.risk);
    }
    let cm = confusion(&gold, &pred).unwrap();
    let m = classification_metrics(&cm).unwrap();
    assert_eq!(m.overall_accuracy, 1.0, "{cm:?}");
    assert_eq!(m.significant_discrepancies, 0);
    assert!(gold.contains(&RiskCategory::High) && gold.contains(&RiskCategory::VeryLow));
}
