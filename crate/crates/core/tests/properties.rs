//! Invariants checked over generated inputs.

use proptest::prelude::*;

use tabdistill::corpus::{parse_record, DatasetRecord, ScientificTable, Setting, Split};
use tabdistill::linearize::{escape, SPECIAL_TOKENS};
use tabdistill::metrics::{
    corpus_meteor, faithfulness_accuracy, meteor, meteor_detail, FaithfulnessLabel, MeteorConfig,
};
use tabdistill::pipeline::{parse_pairs, parse_verdict, Verdict};

fn trimmed_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,.%<>()\"\\\\-]{0,20}[A-Za-z0-9]"
}

fn record() -> impl Strategy<Value = DatasetRecord> {
    (
        "[a-z0-9_:-]{1,10}",
        trimmed_text(),
        prop::collection::vec(
            prop::collection::vec(prop_oneof![Just(String::new()), trimmed_text()], 1..5),
            1..5,
        ),
        trimmed_text(),
        prop::sample::select(Split::ALL.to_vec()),
        prop::sample::select(vec![Setting::FewShot, Setting::Medium, Setting::Large]),
    )
        .prop_flat_map(|(id, caption, rows, description, split, setting)| {
            let n = rows.len();
            (0..=n).prop_map(move |header_rows| DatasetRecord {
                table: ScientificTable::new(id.clone(), caption.clone(), rows.clone(), header_rows)
                    .unwrap(),
                gold_description: description.clone(),
                split,
                setting,
            })
        })
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "the", "model", "models", "score", "scores", "scored", "high", "higher", "a", "on",
            "test",
        ]),
        1..12,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn record_lines_round_trip(rec in record()) {
        prop_assert_eq!(parse_record(&rec.to_json_line()).unwrap(), rec);
    }

    #[test]
    fn escaped_text_has_no_markers(text in "[a-z <>CRAPoT]{0,30}") {
        let escaped = escape(&text);
        for t in SPECIAL_TOKENS {
            prop_assert!(!escaped.contains(t), "{escaped:?} contains {t}");
        }
    }

    #[test]
    fn meteor_is_a_unit_score(c in sentence(), r in sentence()) {
        let d = meteor_detail(&c, &r, &MeteorConfig::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&d.score));
        prop_assert!(d.chunks <= d.matches);
        prop_assert!(d.matches <= d.candidate_len.min(d.reference_len));
        prop_assert_eq!(d.score == 0.0, d.matches == 0);
    }

    #[test]
    fn identical_sentences_score_by_length(s in sentence()) {
        let m = s.split_whitespace().count() as f64;
        let got = meteor(&s, &s, &MeteorConfig::default()).unwrap();
        prop_assert!((got - (1.0 - 0.5 / m.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn corpus_meteor_lies_between_extremes(pairs in prop::collection::vec((sentence(), sentence()), 1..8)) {
        let config = MeteorConfig::default();
        let scores: Vec<f64> = pairs.iter().map(|(c, r)| meteor(c, r, &config).unwrap()).collect();
        let mean = corpus_meteor(&pairs, &config).unwrap();
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= mean && mean <= hi + 1e-12);
    }

    #[test]
    fn faithfulness_ignores_label_order(
        labels in prop::collection::vec((0usize..50, 0u8..2, prop::bool::ANY), 1..60),
        seed in any::<u64>(),
    ) {
        let mut seen = std::collections::BTreeSet::new();
        let labels: Vec<FaithfulnessLabel> = labels
            .into_iter()
            .filter(|(id, _, judge)| seen.insert((*id, *judge)))
            .map(|(id, label, judge)| FaithfulnessLabel {
                example_id: format!("ex{id}"),
                judge_name: if judge { "tapas" } else { "tapex" }.to_string(),
                label,
            })
            .collect();
        let mut shuffled = labels.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        let a = faithfulness_accuracy(&labels).unwrap();
        prop_assert_eq!(&a, &faithfulness_accuracy(&shuffled).unwrap());
        for acc in a.values() {
            prop_assert!((0.0..=100.0).contains(acc));
        }
    }

    #[test]
    fn labelled_pairs_parse_back(
        bodies in prop::collection::vec(("[a-z][a-z0-9 ,.%]{0,30}[a-z0-9.]", "[a-z][a-z0-9 ,.%]{0,30}[a-z0-9.]"), 1..=2),
    ) {
        let raw: String = bodies
            .iter()
            .enumerate()
            .map(|(i, (r, d))| format!("Reasoning {k}: {r}\nDescription {k}: {d}\n", k = i + 1))
            .collect();
        let parsed = parse_pairs(&raw, bodies.len()).unwrap();
        prop_assert_eq!(parsed, bodies);
    }

    #[test]
    fn leading_yes_always_entails(rest in "([ ,.!][ ,.!a-z]{0,20})?") {
        prop_assert_eq!(parse_verdict(&format!("Yes{rest}")), Verdict::Entailed);
        prop_assert_eq!(parse_verdict(&format!("no {rest}")), Verdict::Refuted);
    }
}
