//! Aggregation of external 0/1 entailment judgments into per-judge accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// One judgment: `{"example_id": "...", "judge": "tapex", "label": 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaithfulnessLabel {
    pub example_id: String,
    #[serde(rename = "judge")]
    pub judge_name: String,
    pub label: u8,
}

/// Rounds to two decimals, half away from zero.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percentage of entailed (1) labels per judge, rounded to two decimals.
pub fn faithfulness_accuracy(
    labels: &[FaithfulnessLabel],
) -> Result<BTreeMap<String, f64>, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut tallies: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for l in labels {
        if l.label > 1 {
            return Err(MetricsError::InvalidLabel {
                example_id: l.example_id.clone(),
                value: l.label.to_string(),
            });
        }
        let t = tallies.entry(l.judge_name.as_str()).or_default();
        t.0 += u64::from(l.label);
        t.1 += 1;
    }
    Ok(tallies
        .into_iter()
        .map(|(judge, (ones, n))| (judge.to_string(), round2(100.0 * ones as f64 / n as f64)))
        .collect())
}

/// Reads a label JSONL file. Each (judge, example) pair may appear once.
pub fn load_labels(path: &Path) -> Result<Vec<FaithfulnessLabel>, MetricsError> {
    let text = super::read_file(path)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| MetricsError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if let Some(v) = value.get("label") {
            if !matches!(v.as_u64(), Some(0 | 1)) {
                return Err(MetricsError::InvalidLabel {
                    example_id: value
                        .get("example_id")
                        .and_then(|x| x.as_str())
                        .unwrap_or("?")
                        .to_string(),
                    value: v.to_string(),
                });
            }
        }
        let label: FaithfulnessLabel =
            serde_json::from_value(value).map_err(|e| MetricsError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if !seen.insert((label.judge_name.clone(), label.example_id.clone())) {
            return Err(MetricsError::DuplicateId(format!(
                "{} ({})",
                label.example_id, label.judge_name
            )));
        }
        out.push(label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(judge: &str, values: &[u8]) -> Vec<FaithfulnessLabel> {
        values
            .iter()
            .enumerate()
            .map(|(i, &label)| FaithfulnessLabel {
                example_id: format!("e{i}"),
                judge_name: judge.into(),
                label,
            })
            .collect()
    }

    #[test]
    fn three_of_four() {
        let acc = faithfulness_accuracy(&labels("tapex", &[1, 1, 0, 1])).unwrap();
        assert_eq!(acc["tapex"], 75.0);
    }

    #[test]
    fn all_ones_and_per_judge_split() {
        let mut all = labels("tapas", &[1, 1, 1]);
        all.extend(labels("tapex", &[0, 1]));
        let acc = faithfulness_accuracy(&all).unwrap();
        assert_eq!(acc["tapas"], 100.0);
        assert_eq!(acc["tapex"], 50.0);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert_eq!(faithfulness_accuracy(&[]), Err(MetricsError::EmptyInput));
        assert!(matches!(
            faithfulness_accuracy(&labels("j", &[2])),
            Err(MetricsError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn file_rejects_bad_label_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.jsonl");
        std::fs::write(&p, "{\"example_id\":\"a\",\"judge\":\"j\",\"label\":0.5}\n").unwrap();
        assert!(matches!(
            load_labels(&p),
            Err(MetricsError::InvalidLabel { .. })
        ));
        std::fs::write(
            &p,
            "{\"example_id\":\"a\",\"judge\":\"j\",\"label\":1}\n{\"example_id\":\"a\",\"judge\":\"j\",\"label\":0}\n",
        )
        .unwrap();
        assert!(matches!(load_labels(&p), Err(MetricsError::DuplicateId(_))));
    }
}
