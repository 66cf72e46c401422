//! Persisted run state.
//!
//! A state directory holds three files:
//!
//! - `state.header`: one JSON object with the run id, config fingerprint, and the
//!   completed and failed table ids. It is written last and acts as the commit
//!   point of a checkpoint.
//! - `pairs.log`: one verified [`GeneratedPair`] per line.
//! - `failed.log`: one `{"table_id", "error"}` object per line.
//!
//! Every file is replaced by write-then-rename. On load, log lines for tables the
//! header does not list are dropped, so a crash between renames is harmless.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Verdict};

pub const HEADER_FILE: &str = "state.header";
pub const PAIRS_FILE: &str = "pairs.log";
pub const FAILED_FILE: &str = "failed.log";
const FORMAT: &str = "tabdistill-state/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedPair {
    pub table_id: String,
    pub pair_index: u8,
    pub reasoning: String,
    pub description: String,
    pub raw_response_excerpt: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FailedEntry {
    table_id: String,
    error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    format: String,
    run_id: String,
    config_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corpus: Option<String>,
    completed_table_ids: Vec<String>,
    failed_table_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PipelineState {
    pub run_id: String,
    pub config_fingerprint: String,
    /// Where the source corpus was read from, so emission can find it again.
    pub corpus: Option<String>,
    pub completed_table_ids: BTreeSet<String>,
    pub failed_table_ids: BTreeMap<String, String>,
    pub pairs: Vec<GeneratedPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub tables_processed: usize,
    pub tables_failed: usize,
    pub pairs_generated: usize,
    pub pairs_entailed: usize,
    pub pairs_refuted: usize,
    pub pairs_verify_failed: usize,
    pub retention_rate: f64,
}

impl PipelineState {
    pub fn new(config_fingerprint: &str) -> Self {
        Self {
            run_id: format!(
                "run-{}",
                &config_fingerprint[..config_fingerprint.len().min(12)]
            ),
            config_fingerprint: config_fingerprint.to_string(),
            ..Self::default()
        }
    }

    pub fn is_done(&self, table_id: &str) -> bool {
        self.completed_table_ids.contains(table_id) || self.failed_table_ids.contains_key(table_id)
    }

    pub fn record_success(&mut self, table_id: &str, pairs: Vec<GeneratedPair>) {
        debug_assert!(pairs
            .iter()
            .all(|p| p.table_id == table_id && p.verdict != Verdict::Pending));
        self.failed_table_ids.remove(table_id);
        self.pairs.retain(|p| p.table_id != table_id);
        self.pairs.extend(pairs);
        self.completed_table_ids.insert(table_id.to_string());
    }

    pub fn record_failure(&mut self, table_id: &str, error: String) {
        self.completed_table_ids.remove(table_id);
        self.pairs.retain(|p| p.table_id != table_id);
        self.failed_table_ids.insert(table_id.to_string(), error);
    }

    /// Pairs that pass verification.
    pub fn retained(&self) -> impl Iterator<Item = &GeneratedPair> {
        self.pairs.iter().filter(|p| p.verdict == Verdict::Entailed)
    }

    pub fn stats(&self) -> RunStats {
        let count = |v: Verdict| self.pairs.iter().filter(|p| p.verdict == v).count();
        let generated = self.pairs.len();
        let entailed = count(Verdict::Entailed);
        RunStats {
            tables_processed: self.completed_table_ids.len() + self.failed_table_ids.len(),
            tables_failed: self.failed_table_ids.len(),
            pairs_generated: generated,
            pairs_entailed: entailed,
            pairs_refuted: count(Verdict::Refuted),
            pairs_verify_failed: count(Verdict::VerifyFailed),
            retention_rate: if generated == 0 {
                0.0
            } else {
                entailed as f64 / generated as f64
            },
        }
    }

    fn canonicalize(&mut self) {
        self.pairs
            .sort_by(|a, b| (&a.table_id, a.pair_index).cmp(&(&b.table_id, b.pair_index)));
    }

    /// Writes the logs, then the header, each through a temp file and rename.
    pub fn save(&mut self, dir: &Path) -> Result<(), PipelineError> {
        self.canonicalize();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

        let mut pairs = String::new();
        for p in &self.pairs {
            pairs.push_str(&serde_json::to_string(p).expect("pair serializes"));
            pairs.push('\n');
        }
        write_atomic(&dir.join(PAIRS_FILE), pairs.as_bytes())?;

        let mut failed = String::new();
        for (table_id, error) in &self.failed_table_ids {
            let entry = FailedEntry {
                table_id: table_id.clone(),
                error: error.clone(),
            };
            failed.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
            failed.push('\n');
        }
        write_atomic(&dir.join(FAILED_FILE), failed.as_bytes())?;

        let header = Header {
            format: FORMAT.to_string(),
            run_id: self.run_id.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            corpus: self.corpus.clone(),
            completed_table_ids: self.completed_table_ids.iter().cloned().collect(),
            failed_table_ids: self.failed_table_ids.keys().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
        text.push('\n');
        write_atomic(&dir.join(HEADER_FILE), text.as_bytes())
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(HEADER_FILE).is_file()
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let header_path = dir.join(HEADER_FILE);
        let text = fs::read_to_string(&header_path).map_err(|e| io_err(&header_path, e))?;
        let header: Header = serde_json::from_str(&text)
            .map_err(|e| PipelineError::CorruptState(format!("{}: {e}", header_path.display())))?;
        if header.format != FORMAT {
            return Err(PipelineError::CorruptState(format!(
                "unsupported state format `{}`",
                header.format
            )));
        }
        let completed: BTreeSet<String> = header.completed_table_ids.into_iter().collect();
        let failed_ids: BTreeSet<String> = header.failed_table_ids.into_iter().collect();
        if let Some(both) = completed.intersection(&failed_ids).next() {
            return Err(PipelineError::CorruptState(format!(
                "table `{both}` is both completed and failed"
            )));
        }

        let pairs: Vec<GeneratedPair> = read_lines(&dir.join(PAIRS_FILE))?
            .into_iter()
            .filter(|p: &GeneratedPair| completed.contains(&p.table_id))
            .collect();
        let failed = read_lines(&dir.join(FAILED_FILE))?
            .into_iter()
            .filter(|f: &FailedEntry| failed_ids.contains(&f.table_id))
            .map(|f| (f.table_id, f.error))
            .collect::<BTreeMap<_, _>>();
        let mut state = Self {
            run_id: header.run_id,
            config_fingerprint: header.config_fingerprint,
            corpus: header.corpus,
            completed_table_ids: completed,
            failed_table_ids: failed,
            pairs,
        };
        state.canonicalize();
        Ok(state)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                PipelineError::CorruptState(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    file.sync_all().map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
