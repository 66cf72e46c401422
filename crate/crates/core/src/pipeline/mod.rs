//! Generation, self-verification, filtering, and resumable run state.
//!
//! For each table the teacher is asked once for [`PipelineConfig::pairs_per_table`]
//! (reasoning, description) pairs. Each description is then checked against its
//! table with a yes/no prompt; only "yes" pairs are retained. Progress is
//! checkpointed to a state directory so an interrupted run resumes without
//! repeating finished tables.

mod emit;
mod parse;
mod state;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ScientificTable, Split};
use crate::llm::{ClientError, CompletionBackend, CompletionRequest};
use crate::prompt::{
    build_cot_prompt_with_pairs, build_verification_prompt, Demonstration, DEFAULT_CONTEXT_LIMIT,
    DIVERSE_PAIR_COUNT,
};

pub use emit::{emit_examples, write_examples, EmissionMode, EmittedExample};
pub use parse::{parse_pairs, parse_verdict, LabelProblem, PairParseError};
pub use state::{GeneratedPair, PipelineState, RunStats, FAILED_FILE, HEADER_FILE, PAIRS_FILE};

/// Outcome of the consistency check for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pending,
    Entailed,
    Refuted,
    VerifyFailed,
}

/// Settings that change what a run produces. They are fingerprinted, and a
/// resume under different settings is refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub model_name: String,
    pub pairs_per_table: usize,
    pub parse_retry_limit: u32,
    pub generation_temperature: f64,
    pub verification_temperature: f64,
    pub max_output_tokens: u32,
    pub verification_max_tokens: u32,
    pub context_limit: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-4".into(),
            pairs_per_table: DIVERSE_PAIR_COUNT,
            parse_retry_limit: 2,
            generation_temperature: 0.7,
            verification_temperature: 0.0,
            max_output_tokens: 1024,
            verification_max_tokens: 8,
            context_limit: DEFAULT_CONTEXT_LIMIT,
        }
    }
}

impl PipelineConfig {
    /// Every invalid field, as `generation.<field>: <reason>`.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut bad = |field: &str, reason: &str| out.push(format!("generation.{field}: {reason}"));
        if self.model_name.trim().is_empty() {
            bad("model_name", "must not be empty");
        }
        if !(1..=DIVERSE_PAIR_COUNT).contains(&self.pairs_per_table) {
            bad("pairs_per_table", "must be 1 or 2");
        }
        for (name, t) in [
            ("generation_temperature", self.generation_temperature),
            ("verification_temperature", self.verification_temperature),
        ] {
            if !(0.0..=2.0).contains(&t) {
                bad(name, "must be within [0, 2]");
            }
        }
        if self.max_output_tokens == 0 {
            bad("max_output_tokens", "must be positive");
        }
        if self.verification_max_tokens == 0 {
            bad("verification_max_tokens", "must be positive");
        }
        if self.context_limit == 0 {
            bad("context_limit", "must be positive");
        }
        out
    }
}

/// Settings that affect how a run executes but not what it produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    pub checkpoint_every: usize,
    pub resume: bool,
    /// Stop after this many newly processed tables (an orderly interruption).
    pub max_tables: Option<usize>,
    /// Recorded in a fresh state header for later emission.
    pub corpus_path: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            checkpoint_every: 25,
            resume: false,
            max_tables: None,
            corpus_path: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("generation failed for table {table_id} after {attempts} attempt(s): {reason}")]
    GenerationFailed {
        table_id: String,
        attempts: u32,
        reason: String,
    },
    #[error("state directory {} already holds a run; pass --resume to continue it", .0.display())]
    StateExists(PathBuf),
    #[error("cannot resume: state was written with config {found}, current config is {expected}")]
    ResumeConfigMismatch { expected: String, found: String },
    #[error("corrupt state: {0}")]
    CorruptState(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("pair {table_id}#{pair_index} was already verified")]
    NotPending { table_id: String, pair_index: u8 },
    #[error("run aborted: {0}")]
    Fatal(ClientError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("table {0} is not in the corpus")]
    MissingTable(String),
    #[error("unknown emission mode `{0}` (expected traditional, cot_input or cot_target)")]
    UnknownMode(String),
}

/// Errors that make every later request pointless.
fn is_fatal(e: &ClientError) -> bool {
    matches!(
        e,
        ClientError::AuthFailure { .. }
            | ClientError::MissingApiKey { .. }
            | ClientError::InvalidConfig(_)
            | ClientError::ScriptExhausted
    )
}

/// Hex SHA-256 over the config, the demonstration, and the selected splits.
pub fn config_fingerprint(
    config: &PipelineConfig,
    demo: &Demonstration,
    splits: &[Split],
) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    hasher.update(b"\n");
    hasher.update(serde_json::to_vec(demo).expect("demonstration serializes"));
    hasher.update(b"\n");
    let names: Vec<&str> = splits.iter().map(|s| s.as_str()).collect();
    hasher.update(names.join(",").as_bytes());
    hex::encode(hasher.finalize())
}

fn excerpt(text: &str) -> String {
    text.chars().take(200).collect()
}

/// Asks the teacher for reasoning/description pairs, re-asking while the reply
/// does not parse. Returned pairs are [`Verdict::Pending`].
pub fn generate_for_table(
    table: &ScientificTable,
    demo: &Demonstration,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<Vec<GeneratedPair>, PipelineError> {
    let failed = |attempts: u32, reason: String| PipelineError::GenerationFailed {
        table_id: table.table_id.clone(),
        attempts,
        reason,
    };
    let prompt =
        build_cot_prompt_with_pairs(demo, table, config.pairs_per_table, config.context_limit)
            .map_err(|e| failed(0, e.to_string()))?;
    let request = CompletionRequest::new(
        config.model_name.clone(),
        prompt.messages,
        config.generation_temperature,
        config.max_output_tokens,
    )
    .map_err(|e| failed(0, e.to_string()))?;

    let max_attempts = config.parse_retry_limit + 1;
    let mut last_problem = String::new();
    for attempt in 1..=max_attempts {
        let response = match backend.complete(&request) {
            Ok(r) => r,
            Err(e) if is_fatal(&e) => return Err(PipelineError::Fatal(e)),
            Err(e) => return Err(failed(attempt, e.to_string())),
        };
        match parse_pairs(&response.content, config.pairs_per_table) {
            Ok(pairs) => {
                let raw = excerpt(&response.content);
                return Ok(pairs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (reasoning, description))| GeneratedPair {
                        table_id: table.table_id.clone(),
                        pair_index: (i + 1) as u8,
                        reasoning,
                        description,
                        raw_response_excerpt: raw.clone(),
                        verdict: Verdict::Pending,
                    })
                    .collect());
            }
            Err(e) => {
                log::debug!(
                    "table {}: unparseable reply on attempt {attempt}: {e}",
                    table.table_id
                );
                last_problem = format!("unparseable reply ({e})");
            }
        }
    }
    Err(failed(max_attempts, last_problem))
}

/// Checks one pending pair against its table. Any backend failure becomes
/// [`Verdict::VerifyFailed`] rather than an error.
pub fn verify_pair(
    pair: &GeneratedPair,
    table: &ScientificTable,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<Verdict, PipelineError> {
    if pair.verdict != Verdict::Pending {
        return Err(PipelineError::NotPending {
            table_id: pair.table_id.clone(),
            pair_index: pair.pair_index,
        });
    }
    let prompt = match build_verification_prompt(table, &pair.description, config.context_limit) {
        Ok(p) => p,
        Err(e) => {
            log::warn!(
                "{}#{}: verification prompt failed: {e}",
                pair.table_id,
                pair.pair_index
            );
            return Ok(Verdict::VerifyFailed);
        }
    };
    let request = CompletionRequest::new(
        config.model_name.clone(),
        prompt.messages,
        config.verification_temperature,
        config.verification_max_tokens,
    )
    .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    match backend.complete(&request) {
        Ok(response) => Ok(parse_verdict(&response.content)),
        Err(e) if is_fatal(&e) => Err(PipelineError::Fatal(e)),
        Err(e) => {
            log::warn!(
                "{}#{}: verification failed: {e}",
                pair.table_id,
                pair.pair_index
            );
            Ok(Verdict::VerifyFailed)
        }
    }
}

/// Generates and verifies all pairs for one table.
fn process_table(
    table: &ScientificTable,
    demo: &Demonstration,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
) -> Result<Vec<GeneratedPair>, PipelineError> {
    let mut pairs = generate_for_table(table, demo, backend, config)?;
    for pair in &mut pairs {
        pair.verdict = verify_pair(pair, table, backend, config)?;
    }
    Ok(pairs)
}

/// Opens the state directory for a run: fresh, or resumed after a fingerprint check.
pub fn open_state(
    dir: &Path,
    fingerprint: &str,
    resume: bool,
) -> Result<PipelineState, PipelineError> {
    if !PipelineState::exists(dir) {
        return Ok(PipelineState::new(fingerprint));
    }
    if !resume {
        return Err(PipelineError::StateExists(dir.to_path_buf()));
    }
    let state = PipelineState::load(dir)?;
    if state.config_fingerprint != fingerprint {
        return Err(PipelineError::ResumeConfigMismatch {
            expected: fingerprint.to_string(),
            found: state.config_fingerprint,
        });
    }
    Ok(state)
}

/// Runs generation and verification over `tables`, skipping tables already in
/// the state directory.
///
/// `options.workers` threads pull tables from a shared queue; a single writer
/// owns the state and checkpoints every `options.checkpoint_every` finished
/// tables and once at the end. The persisted state is ordered canonically, so
/// the files do not depend on worker scheduling or on where a run was resumed.
pub fn run_pipeline(
    tables: &[ScientificTable],
    demo: &Demonstration,
    backend: &dyn CompletionBackend,
    config: &PipelineConfig,
    splits: &[Split],
    state_dir: &Path,
    options: &RunOptions,
) -> Result<PipelineState, PipelineError> {
    let problems = config.violations();
    if !problems.is_empty() {
        return Err(PipelineError::InvalidConfig(problems.join("; ")));
    }
    let fingerprint = config_fingerprint(config, demo, splits);
    let mut state = open_state(state_dir, &fingerprint, options.resume)?;
    if state.corpus.is_none() {
        state.corpus = options.corpus_path.clone();
    }

    let mut todo: Vec<&ScientificTable> = tables
        .iter()
        .filter(|t| !state.is_done(&t.table_id))
        .collect();
    if let Some(limit) = options.max_tables {
        todo.truncate(limit);
    }
    log::info!(
        "{} table(s) to process, {} already done, {} worker(s)",
        todo.len(),
        tables.len()
            - tables
                .iter()
                .filter(|t| !state.is_done(&t.table_id))
                .count(),
        options.workers.max(1)
    );

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let checkpoint_every = options.checkpoint_every.max(1);
    let workers = options.workers.max(1).min(todo.len().max(1));

    let outcome: Result<(), PipelineError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(String, Result<Vec<GeneratedPair>, PipelineError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next, abort) = (&todo, &next, &abort);
            scope.spawn(move || {
                while !abort.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(table) = todo.get(i) else { break };
                    let result = process_table(table, demo, backend, config);
                    if tx.send((table.table_id.clone(), result)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        let mut since_checkpoint = 0;
        let mut fatal = None;
        for (table_id, result) in rx {
            match result {
                Ok(pairs) => state.record_success(&table_id, pairs),
                Err(PipelineError::Fatal(e)) => {
                    abort.store(true, Ordering::SeqCst);
                    fatal.get_or_insert(PipelineError::Fatal(e));
                    continue;
                }
                Err(e) => {
                    log::warn!("{e}");
                    state.record_failure(&table_id, e.to_string());
                }
            }
            since_checkpoint += 1;
            if since_checkpoint >= checkpoint_every {
                state.save(state_dir)?;
                since_checkpoint = 0;
            }
        }
        fatal.map_or(Ok(()), Err)
    });

    state.save(state_dir)?;
    outcome?;
    Ok(state)
}
