mod common;

use common::*;
use proptest::prelude::*;
use thyropath::classifier::RuleTable;
use thyropath::corpus_io::synth::{generate_synthetic, GeneratorConfig, NoiseConfig};
use thyropath::evaluation::{cohen_kappa, compute_metrics, match_mention_lists, Counts, MatchMode};
use thyropath::{extract, load_lexicon, to_feature_record, Category, RiskCategory};

fn noisy(seed: u64, n: usize, frac: f64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        n,
        structured_fraction: frac,
        noise: NoiseConfig::standard(),
        ..GeneratorConfig::default()
    }
}

fn label() -> impl Strategy<Value = RiskCategory> {
    prop_oneof![
        Just(RiskCategory::High),
        Just(RiskCategory::Intermediate),
        Just(RiskCategory::Low),
        Just(RiskCategory::VeryLow)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn extracted_spans_slice_to_their_surface(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let lexicon = shared_lexicon();
        for case in generate_synthetic(&noisy(seed, 3, frac)).unwrap().cases {
            let mentions = extract(&case.document, lexicon).unwrap();
            for m in &mentions {
                prop_assert!(m.validate_against(&case.document.text).is_ok(), "{m:?}");
            }
            for pair in mentions.windows(2) {
                prop_assert!(pair[0].span.start <= pair[1].span.start);
            }
        }
    }

    #[test]
    fn generated_gold_is_well_formed(seed in any::<u64>(), frac in 0.0f64..1.0) {
        for case in generate_synthetic(&noisy(seed, 3, frac)).unwrap().cases {
            for m in &case.gold.mentions {
                prop_assert!(m.validate_against(&case.document.text).is_ok(), "{m:?}");
            }
            prop_assert!(case.gold.risk.is_some());
        }
    }

    #[test]
    fn millimetres_and_centimetres_agree(tenths in 1u32..999) {
        let lexicon = shared_lexicon();
        let size = |q: String| {
            let doc = structured_doc(&format!(" Tumor Size: Greatest dimension: {q}.\n"));
            let m = extract(&doc, lexicon).unwrap();
            to_feature_record(&doc, &m, lexicon).tumor_size()
        };
        let mm = size(format!("{tenths} mm"));
        prop_assert!(mm.is_some());
        prop_assert_eq!(mm, size(format!("{}.{} cm", tenths / 10, tenths % 10)));
    }

    #[test]
    fn classifier_matches_independent_oracle(r in record_strategy()) {
        agrees_with_oracle(&RuleTable::standard(), &r).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn escalating_a_feature_never_lowers_risk(r in record_strategy(), which in any::<u8>(), amount in 1u8..60) {
        monotone(&RuleTable::standard(), &r, which, amount)?;
    }

    #[test]
    fn metrics_stay_in_unit_interval(tp in 0usize..400, fp in 0usize..400, fn_ in 0usize..400) {
        let m = compute_metrics(Counts::new(tp, fp, fn_));
        for v in [m.accuracy, m.precision, m.recall, m.f1].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let (Some(a), Some(f)) = (m.accuracy, m.f1) {
            prop_assert!(a <= f + 1e-12);
        }
    }

    #[test]
    fn lenient_never_below_strict(seed in any::<u64>()) {
        let lexicon = shared_lexicon();
        for case in generate_synthetic(&noisy(seed, 2, 0.5)).unwrap().cases {
            let pred = extract(&case.document, lexicon).unwrap();
            let strict = match_mention_lists(&case.gold.mentions, &pred, MatchMode::Strict);
            let lenient = match_mention_lists(&case.gold.mentions, &pred, MatchMode::Lenient);
            for c in Category::ALL {
                prop_assert!(lenient.get(c).tp >= strict.get(c).tp, "{c:?}");
            }
        }
    }

    #[test]
    fn kappa_of_identical_ratings_is_one(mut labels in prop::collection::vec(label(), 1..80)) {
        let other = if labels[0] == RiskCategory::Low { RiskCategory::High } else { RiskCategory::Low };
        labels.push(other);
        prop_assert_eq!(cohen_kappa(&labels, &labels), Ok(1.0));
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((label(), label()), 2..80)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        match (cohen_kappa(&a, &b), cohen_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn generator_is_deterministic(seed in any::<u64>(), n in 0usize..10) {
        let a = generate_synthetic(&noisy(seed, n, 0.5)).unwrap();
        let b = generate_synthetic(&noisy(seed, n, 0.5)).unwrap();
        prop_assert_eq!(a.corpus_jsonl(), b.corpus_jsonl());
        prop_assert_eq!(a.gold_jsonl(), b.gold_jsonl());
    }

    #[test]
    fn lexicon_surfaces_resolve_in_any_case(pick in any::<prop::sample::Index>(), flips in any::<u64>()) {
        let lexicon = shared_lexicon();
        let all: Vec<_> = lexicon
            .entries()
            .iter()
            .flat_map(|e| e.attributes.iter().flat_map(move |a| a.all_surfaces().map(move |s| (e.category, s))))
            .collect();
        let (category, surface) = all[pick.index(all.len())];
        let cased: String = surface
            .chars()
            .enumerate()
            .map(|(i, ch)| if flips >> (i % 64) & 1 == 1 { ch.to_ascii_uppercase() } else { ch.to_ascii_lowercase() })
            .collect();
        // Surfaces shared between attributes go to the first (most severe) one.
        let first = lexicon
            .entry(category)
            .attributes
            .iter()
            .position(|a| a.all_surfaces().any(|s| s.eq_ignore_ascii_case(surface)))
            .unwrap();
        prop_assert_eq!(lexicon.lookup(category, &cased), Some(lexicon.attribute_value(category, first)));
    }
}

#[test]
fn lexicon_config_round_trips() {
    let lexicon = shared_lexicon();
    let json = lexicon.to_config_json();
    let again = load_lexicon(&json).unwrap();
    assert_eq!(again.to_config_json(), json);
    assert_eq!(again.entries(), lexicon.entries());
}
