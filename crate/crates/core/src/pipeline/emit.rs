//! Student training examples as JSONL: `{"example_id", "input", "target"}`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::state::write_atomic;
use super::{PipelineError, PipelineState};
use crate::corpus::Corpus;
use crate::linearize::{attach_reasoning, escape, linearize_table, COT_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionMode {
    /// Table in, gold description out. Covers every corpus record.
    Traditional,
    /// `T <CoT> R` in, generated description out.
    CotInput,
    /// Table in, `R <CoT> Y` out.
    CotTarget,
}

impl EmissionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EmissionMode::Traditional => "traditional",
            EmissionMode::CotInput => "cot_input",
            EmissionMode::CotTarget => "cot_target",
        }
    }
}

impl fmt::Display for EmissionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmissionMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traditional" => Ok(EmissionMode::Traditional),
            "cot_input" => Ok(EmissionMode::CotInput),
            "cot_target" => Ok(EmissionMode::CotTarget),
            other => Err(PipelineError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedExample {
    pub example_id: String,
    pub input: String,
    pub target: String,
}

impl EmittedExample {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("example serializes")
    }
}

fn linearize_err(table_id: &str, e: impl fmt::Display) -> PipelineError {
    PipelineError::CorruptState(format!("table {table_id}: {e}"))
}

/// Builds the examples for `mode`. CoT modes use only entailed pairs from
/// `state`, in canonical (table id, pair index) order; every such table must
/// be present in `corpus`.
pub fn emit_examples(
    state: &PipelineState,
    corpus: &Corpus,
    mode: EmissionMode,
) -> Result<Vec<EmittedExample>, PipelineError> {
    if mode == EmissionMode::Traditional {
        return corpus
            .records()
            .iter()
            .map(|r| {
                let input =
                    linearize_table(&r.table).map_err(|e| linearize_err(r.table_id(), e))?;
                Ok(EmittedExample {
                    example_id: r.table_id().to_string(),
                    input: input.text,
                    target: r.gold_description.clone(),
                })
            })
            .collect();
    }

    let mut pairs: Vec<_> = state.retained().collect();
    pairs.sort_by(|a, b| (&a.table_id, a.pair_index).cmp(&(&b.table_id, b.pair_index)));
    pairs
        .into_iter()
        .map(|pair| {
            let record = corpus
                .get(&pair.table_id)
                .ok_or_else(|| PipelineError::MissingTable(pair.table_id.clone()))?;
            let table_input =
                linearize_table(&record.table).map_err(|e| linearize_err(&pair.table_id, e))?;
            let (input, target) = match mode {
                EmissionMode::CotInput => {
                    let with_cot = attach_reasoning(&table_input, &pair.reasoning)
                        .map_err(|e| linearize_err(&pair.table_id, e))?;
                    (with_cot.text, pair.description.clone())
                }
                _ => (
                    table_input.text,
                    format!(
                        "{} {COT_TOKEN} {}",
                        escape(&pair.reasoning),
                        escape(&pair.description)
                    ),
                ),
            };
            Ok(EmittedExample {
                example_id: format!("{}#{}", pair.table_id, pair.pair_index),
                input,
                target,
            })
        })
        .collect()
}

/// Writes examples as JSONL, replacing `path` atomically. Returns the line count.
pub fn write_examples(path: &Path, examples: &[EmittedExample]) -> Result<usize, PipelineError> {
    let mut text = String::new();
    for ex in examples {
        text.push_str(&ex.to_json_line());
        text.push('\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| PipelineError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    write_atomic(path, text.as_bytes())?;
    Ok(examples.len())
}
