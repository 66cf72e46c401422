//! Surface-level METEOR and faithfulness-label aggregation, plus run reports.

pub mod faithfulness;
pub mod meteor;
pub mod porter;
pub mod report;

use std::path::{Path, PathBuf};

pub use faithfulness::{faithfulness_accuracy, load_labels, FaithfulnessLabel};
pub use meteor::{corpus_meteor, meteor, meteor_detail, MatcherStage, MeteorConfig, MeteorScore};
pub use report::{build_report, render_report, ScoreReport, TextRecord};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("nothing to score")]
    EmptyInput,
    #[error("generations, references and labels do not align; offending ids: {}", .0.join(", "))]
    AlignmentFailure(Vec<String>),
    #[error("duplicate example id {0}")]
    DuplicateId(String),
    #[error("label for {example_id} must be 0 or 1, got {value}")]
    InvalidLabel { example_id: String, value: String },
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },
    #[error("{} line {line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn read_file(path: &Path) -> Result<String, MetricsError> {
    std::fs::read_to_string(path).map_err(|e| MetricsError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
