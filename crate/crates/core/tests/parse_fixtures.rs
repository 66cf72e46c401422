//! Teacher-response variants the pair parser must accept or reject precisely.

use serde::Deserialize;

use tabdistill::pipeline::{parse_pairs, LabelProblem};

#[derive(Deserialize)]
struct Expected {
    label: String,
    problem: String,
}

#[derive(Deserialize)]
struct Case {
    name: String,
    expected_pairs: usize,
    raw: String,
    #[serde(default)]
    pairs: Option<Vec<(String, String)>>,
    #[serde(default)]
    error: Option<Expected>,
}

fn problem_name(p: LabelProblem) -> &'static str {
    match p {
        LabelProblem::Missing => "missing",
        LabelProblem::EmptyBody => "empty_body",
        LabelProblem::Unexpected => "unexpected",
    }
}

#[test]
fn mutated_responses_parse_as_expected() {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/parse_mutations.json"
    );
    let cases: Vec<Case> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!(cases.len() >= 20);
    let mut failures = Vec::new();
    for case in &cases {
        let got = parse_pairs(&case.raw, case.expected_pairs);
        let ok = match (&got, &case.pairs, &case.error) {
            (Ok(pairs), Some(want), None) => pairs == want,
            (Err(e), None, Some(want)) => {
                e.label == want.label && problem_name(e.problem) == want.problem
            }
            _ => false,
        };
        if !ok {
            failures.push(format!("{}: got {got:?}", case.name));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
