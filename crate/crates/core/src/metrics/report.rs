//! Per-run score reports: faithfulness accuracies and mean METEOR.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::faithfulness::{faithfulness_accuracy, load_labels};
use super::meteor::{corpus_meteor, MeteorConfig};
use super::{read_file, MetricsError};

/// One generation or reference: `{"example_id": "...", "text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub example_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub run_name: String,
    pub n_examples: usize,
    pub meteor_mean: f64,
    /// Judge name to percentage of entailed labels.
    pub accuracy: BTreeMap<String, f64>,
}

pub fn load_texts(path: &Path) -> Result<BTreeMap<String, String>, MetricsError> {
    let text = read_file(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TextRecord = serde_json::from_str(line).map_err(|e| MetricsError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if out.insert(record.example_id.clone(), record.text).is_some() {
            return Err(MetricsError::DuplicateId(record.example_id));
        }
    }
    Ok(out)
}

/// Joins generations and references by id and scores them. Label ids must be
/// a subset of the generation ids.
pub fn build_report(
    run_name: &str,
    generations: &Path,
    references: &Path,
    labels: Option<&Path>,
    config: &MeteorConfig,
) -> Result<ScoreReport, MetricsError> {
    let gens = load_texts(generations)?;
    let refs = load_texts(references)?;
    let gen_ids: BTreeSet<&String> = gens.keys().collect();
    let ref_ids: BTreeSet<&String> = refs.keys().collect();
    let offending: Vec<String> = gen_ids
        .symmetric_difference(&ref_ids)
        .map(|s| s.to_string())
        .collect();
    if !offending.is_empty() {
        return Err(MetricsError::AlignmentFailure(offending));
    }
    if gens.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pairs: Vec<(&str, &str)> = gens
        .iter()
        .map(|(id, g)| (g.as_str(), refs[id].as_str()))
        .collect();
    let meteor_mean = corpus_meteor(&pairs, config)?;

    let accuracy = match labels {
        None => BTreeMap::new(),
        Some(path) => {
            let labels = load_labels(path)?;
            let unknown: BTreeSet<String> = labels
                .iter()
                .filter(|l| !gens.contains_key(&l.example_id))
                .map(|l| l.example_id.clone())
                .collect();
            if !unknown.is_empty() {
                return Err(MetricsError::AlignmentFailure(
                    unknown.into_iter().collect(),
                ));
            }
            faithfulness_accuracy(&labels)?
        }
    };
    Ok(ScoreReport {
        run_name: run_name.to_string(),
        n_examples: gens.len(),
        meteor_mean,
        accuracy,
    })
}

const FAITH_GROUP: &str = "Faithfulness-level";
const SURFACE_GROUP: &str = "Surface-level";

/// Fixed-layout table: faithfulness columns (one per judge) then METEOR.
///
/// ```text
/// Run     | Faithfulness-level | Surface-level
///         | tapas     tapex    | METEOR
/// --------+--------------------+--------------
/// t5-cot  | 78.16     82.30    | 0.2345
/// examples: 10
/// ```
pub fn render_report(report: &ScoreReport) -> String {
    let run_w = report.run_name.chars().count().max(3) + 1;
    let judge_w = |j: &str| j.chars().count().max(6) + 2;
    let (judge_head, judge_vals) = if report.accuracy.is_empty() {
        ("n/a".to_string(), "-".to_string())
    } else {
        let mut head = String::new();
        let mut vals = String::new();
        for (judge, acc) in &report.accuracy {
            let w = judge_w(judge);
            head.push_str(&format!("{judge:<w$}"));
            vals.push_str(&format!("{:<w$}", format!("{acc:.2}")));
        }
        (head.trim_end().to_string(), vals.trim_end().to_string())
    };
    let faith_w = FAITH_GROUP.len().max(judge_head.len());
    let surface_w = SURFACE_GROUP.len();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<run_w$} | {FAITH_GROUP:<faith_w$} | {SURFACE_GROUP}\n",
        "Run"
    ));
    out.push_str(&format!(
        "{:<run_w$} | {judge_head:<faith_w$} | METEOR\n",
        ""
    ));
    out.push_str(&format!(
        "{}-+-{}-+-{}\n",
        "-".repeat(run_w),
        "-".repeat(faith_w),
        "-".repeat(surface_w)
    ));
    out.push_str(&format!(
        "{:<run_w$} | {judge_vals:<faith_w$} | {:.4}\n",
        report.run_name, report.meteor_mean
    ));
    out.push_str(&format!("examples: {}\n", report.n_examples));
    out
}
