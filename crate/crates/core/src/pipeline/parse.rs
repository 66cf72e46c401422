//! Splitting a teacher response into labelled (reasoning, description) pairs.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

use super::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelProblem {
    Missing,
    EmptyBody,
    Unexpected,
}

/// Which label broke parsing, e.g. `Reasoning 2` / `Missing`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairParseError {
    pub label: String,
    pub problem: LabelProblem,
}

impl fmt::Display for PairParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.problem {
            LabelProblem::Missing => "missing",
            LabelProblem::EmptyBody => "empty body",
            LabelProblem::Unexpected => "more pairs than requested",
        };
        write!(f, "{}: {what}", self.label)
    }
}

impl std::error::Error for PairParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Reasoning,
    Description,
}

impl Kind {
    fn label(self, k: usize) -> String {
        match self {
            Kind::Reasoning => format!("Reasoning {k}"),
            Kind::Description => format!("Description {k}"),
        }
    }
}

struct Label {
    kind: Kind,
    index: usize,
    start: usize,
    end: usize,
}

fn label_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(reasoning|description)[ \t]*(\d+)[ \t]*(?:\*\*)?[ \t]*:[ \t]*(?:\*\*)?")
            .expect("label pattern compiles")
    })
}

/// True for text that is only a list marker: `-`, `*`, `•`, `3.` or `3)`.
fn is_list_marker(line: &str) -> bool {
    let line = line.trim();
    matches!(line, "-" | "*" | "•")
        || line
            .strip_suffix(['.', ')'])
            .is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
}

/// Trims a label body, dropping markdown bold and the list marker that
/// introduces the next label.
fn clean(body: &str) -> String {
    let mut body = body.trim();
    if let Some((head, last)) = body.rsplit_once('\n') {
        let last = last.trim().trim_matches('*').trim();
        if last.is_empty() || is_list_marker(last) {
            body = head.trim_end();
        }
    }
    body.trim_matches('*').trim().to_string()
}

/// Scans `raw` for `Reasoning k:` / `Description k:` labels (any case) and
/// returns exactly `expected` pairs in label order.
///
/// Prose before the first label is ignored. The body of the last label ends at
/// the first blank line, so trailing chatter is dropped.
pub fn parse_pairs(raw: &str, expected: usize) -> Result<Vec<(String, String)>, PairParseError> {
    assert!(
        (1..=2).contains(&expected),
        "expected pair count must be 1 or 2"
    );
    let labels: Vec<Label> = label_pattern()
        .captures_iter(raw)
        .map(|c| {
            let whole = c.get(0).expect("match");
            let kind = if c[1].eq_ignore_ascii_case("reasoning") {
                Kind::Reasoning
            } else {
                Kind::Description
            };
            Label {
                kind,
                index: c[2].parse().unwrap_or(usize::MAX),
                start: whole.start(),
                end: whole.end(),
            }
        })
        .collect();

    if let Some(extra) = labels.iter().find(|l| l.index == 0 || l.index > expected) {
        return Err(PairParseError {
            label: extra.kind.label(extra.index),
            problem: LabelProblem::Unexpected,
        });
    }

    let body = |i: usize| -> String {
        let from = labels[i].end;
        let to = match labels.get(i + 1) {
            Some(next) => next.start,
            None => {
                let rest = &raw[from..];
                let first_text = rest.len() - rest.trim_start().len();
                rest[first_text..]
                    .find("\n\n")
                    .or_else(|| rest[first_text..].find("\r\n\r\n"))
                    .map_or(raw.len(), |p| from + first_text + p)
            }
        };
        clean(&raw[from..to])
    };

    let mut pairs = Vec::with_capacity(expected);
    for k in 1..=expected {
        let mut pair = [String::new(), String::new()];
        for (slot, kind) in [Kind::Reasoning, Kind::Description].into_iter().enumerate() {
            let pos = labels
                .iter()
                .position(|l| l.kind == kind && l.index == k)
                .ok_or(PairParseError {
                    label: kind.label(k),
                    problem: LabelProblem::Missing,
                })?;
            let text = body(pos);
            if text.is_empty() {
                return Err(PairParseError {
                    label: kind.label(k),
                    problem: LabelProblem::EmptyBody,
                });
            }
            pair[slot] = text;
        }
        let [reasoning, description] = pair;
        pairs.push((reasoning, description));
    }
    Ok(pairs)
}

/// First-token rule: a leading "yes" entails, a leading "no" refutes, anything
/// else is a failed verification.
pub fn parse_verdict(answer: &str) -> Verdict {
    let trimmed = answer.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = trimmed
        .chars()
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    match word.as_str() {
        "yes" => Verdict::Entailed,
        "no" => Verdict::Refuted,
        _ => Verdict::VerifyFailed,
    }
}
