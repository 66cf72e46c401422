//! The `tabdistill` command line.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
//! With `--json` every subcommand prints one JSON object on stdout (errors
//! included, as `{"error": ..., "exit_code": ...}`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig, ScoreSection};
use crate::corpus::{
    corpus_stats, load_corpus, render_stats, scigen, Corpus, DatasetRecord, Setting, Split,
};
use crate::linearize::linearize_table;
use crate::llm::{
    BackendConfig, ClientError, Clock, HttpTransport, LlmClient, ManualClock, MockBackend,
    MockScript, SystemClock, Transport,
};
use crate::metrics::{build_report, render_report, MeteorConfig};
use crate::pipeline::{
    emit_examples, run_pipeline, write_examples, EmissionMode, PipelineConfig, PipelineState,
    RunOptions, RunStats,
};
use crate::prompt::{
    build_cot_prompt, build_direct_prompt, build_verification_prompt, estimate_token_budget,
    Demonstration, DEFAULT_CONTEXT_LIMIT,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tabdistill",
    version,
    about = "Distill table chain-of-thought data from a teacher LLM"
)]
pub struct Cli {
    /// Print a machine-readable JSON summary.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a SciGen directory into a JSONL corpus.
    Ingest(IngestArgs),
    /// Per-split record counts and mean lengths.
    Stats(StatsArgs),
    /// Write the linearized form of every table.
    Linearize(LinearizeArgs),
    /// Render one prompt for a table.
    Prompt(PromptArgs),
    /// Generate and verify reasoning/description pairs.
    Generate(GenerateArgs),
    /// Summarize a state directory.
    FilterStats(StateArgs),
    /// Write student training examples.
    Emit(EmitArgs),
    /// Score generations against references.
    Score(ScoreArgs),
    /// Ingest, generate, filter, emit and optionally score from one config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Root of the SciGen dataset directory.
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Setting,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Keep only records of this setting.
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
}

#[derive(Debug, Args)]
pub struct LinearizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Cot,
    Direct,
    Verification,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long, value_enum)]
    pub variant: VariantArg,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub table_id: String,
    /// Demonstration file; required for cot and direct.
    #[arg(long)]
    pub demo: Option<PathBuf>,
    /// Description to verify; defaults to the record's gold description.
    #[arg(long)]
    pub description: Option<String>,
    #[arg(long, default_value_t = DEFAULT_CONTEXT_LIMIT)]
    pub context_limit: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub demo: PathBuf,
    /// Split(s) to process; repeatable.
    #[arg(long = "split", value_parser = parse_split, default_value = "train")]
    pub splits: Vec<Split>,
    /// State directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue an existing state directory.
    #[arg(long)]
    pub resume: bool,
    /// TOML file supplying [backend] and [generation] settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Use a scripted mock backend instead of HTTP.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// One worker, mock backend, virtual clock.
    #[arg(long)]
    pub deterministic: bool,
    /// Stop after this many newly processed tables.
    #[arg(long)]
    pub max_tables: Option<usize>,
    #[arg(long, value_parser = parse_setting)]
    pub setting: Option<Setting>,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    #[arg(long)]
    pub state: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    pub mode: EmissionMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Corpus file; defaults to the one recorded in the state header.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Restrict traditional examples to these split(s).
    #[arg(long = "split", value_parser = parse_split)]
    pub splits: Vec<Split>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "run")]
    pub run_name: String,
    #[arg(long = "gen")]
    pub generations: PathBuf,
    #[arg(long = "ref")]
    pub references: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
}

fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse()
        .map_err(|e: crate::corpus::RecordError| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
        .map_err(|e: crate::corpus::RecordError| e.to_string())
}

fn parse_mode(s: &str) -> Result<EmissionMode, String> {
    s.parse()
        .map_err(|e: crate::pipeline::PipelineError| e.to_string())
}

/// A failed command: exit code plus message.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::invalid(e.to_string())
    }
}

/// What a command produced: a human rendering and a JSON summary.
struct Outcome {
    text: String,
    json: Value,
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let rendered = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    let json = cli.json;
    match execute(cli.command) {
        Ok(outcome) => {
            let _ = if json {
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&outcome.json).expect("summary serializes")
                )
            } else {
                write!(out, "{}", outcome.text)
            };
            EXIT_OK
        }
        Err(e) => {
            if json {
                let _ = writeln!(out, "{}", json!({"error": e.message, "exit_code": e.code}));
            }
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn execute(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Stats(a) => stats(a),
        Command::Linearize(a) => linearize(a),
        Command::Prompt(a) => prompt(a),
        Command::Generate(a) => generate(a),
        Command::FilterStats(a) => filter_stats(a),
        Command::Emit(a) => emit(a),
        Command::Score(a) => score(a),
        Command::Run(a) => run(a),
    }
}

fn require_file(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::invalid(format!(
            "--{flag}: file not found: {}",
            path.display()
        )))
    }
}

fn write_jsonl<'a>(
    path: &Path,
    lines: impl Iterator<Item = String> + 'a,
) -> Result<usize, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
    }
    let mut text = String::new();
    let mut n = 0;
    for line in lines {
        text.push_str(&line);
        text.push('\n');
        n += 1;
    }
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(n)
}

fn write_corpus(path: &Path, records: &[DatasetRecord]) -> Result<usize, CliError> {
    write_jsonl(path, records.iter().map(DatasetRecord::to_json_line))
}

fn split_counts(records: &[DatasetRecord]) -> Value {
    let mut counts = serde_json::Map::new();
    for split in Split::ALL {
        let n = records.iter().filter(|r| r.split == split).count();
        counts.insert(split.as_str().into(), n.into());
    }
    Value::Object(counts)
}

fn ingest(a: IngestArgs) -> Result<Outcome, CliError> {
    if !a.path.is_dir() {
        return Err(CliError::invalid(format!(
            "--path: directory not found: {}",
            a.path.display()
        )));
    }
    let records = scigen::ingest_dir(&a.path, a.setting).map_err(CliError::runtime)?;
    let n = write_corpus(&a.out, &records)?;
    let counts = split_counts(&records);
    Ok(Outcome {
        text: format!("wrote {n} records to {}\n", a.out.display()),
        json: json!({"records": n, "per_split": counts, "out": a.out}),
    })
}

fn stats(a: StatsArgs) -> Result<Outcome, CliError> {
    require_file("corpus", &a.corpus)?;
    let corpus = load_corpus(&a.corpus, a.setting).map_err(CliError::runtime)?;
    let stats = corpus_stats(&corpus).map_err(CliError::runtime)?;
    Ok(Outcome {
        text: render_stats(&stats),
        json: serde_json::to_value(&stats).expect("stats serialize"),
    })
}

fn linearize(a: LinearizeArgs) -> Result<Outcome, CliError> {
    require_file("corpus", &a.corpus)?;
    let corpus = load_corpus(&a.corpus, None).map_err(CliError::runtime)?;
    let mut lines = Vec::new();
    let mut collisions = 0;
    for r in corpus
        .records()
        .iter()
        .filter(|r| a.split.is_none_or(|s| r.split == s))
    {
        let lin = linearize_table(&r.table).map_err(CliError::runtime)?;
        collisions += lin.collisions.len();
        lines.push(json!({"table_id": r.table_id(), "input": lin.text}).to_string());
    }
    let n = write_jsonl(&a.out, lines.into_iter())?;
    Ok(Outcome {
        text: format!(
            "wrote {n} linearized tables to {} ({collisions} escaped token collisions)\n",
            a.out.display()
        ),
        json: json!({"tables": n, "collisions": collisions, "out": a.out}),
    })
}

fn prompt(a: PromptArgs) -> Result<Outcome, CliError> {
    require_file("corpus", &a.corpus)?;
    let corpus = load_corpus(&a.corpus, None).map_err(CliError::runtime)?;
    let record = corpus.get(&a.table_id).ok_or_else(|| {
        CliError::invalid(format!(
            "--table-id: no table `{}` in the corpus",
            a.table_id
        ))
    })?;
    let demo = || -> Result<Demonstration, CliError> {
        let path = a
            .demo
            .as_ref()
            .ok_or_else(|| CliError::invalid("--demo: required for this variant"))?;
        require_file("demo", path)?;
        Demonstration::load(path).map_err(|e| CliError::invalid(format!("--demo: {e}")))
    };
    let built = match a.variant {
        VariantArg::Cot => build_cot_prompt(&demo()?, &record.table, a.context_limit),
        VariantArg::Direct => build_direct_prompt(&demo()?, &record.table, a.context_limit),
        VariantArg::Verification => {
            let d = a.description.as_deref().unwrap_or(&record.gold_description);
            build_verification_prompt(&record.table, d, a.context_limit)
        }
    }
    .map_err(CliError::runtime)?;
    let estimate = estimate_token_budget(&built, a.context_limit).map_err(CliError::runtime)?;
    Ok(Outcome {
        text: built.render(),
        json: json!({
            "variant": built.variant,
            "table_id": built.target_table_id,
            "estimated_tokens": estimate,
            "messages": built.messages,
        }),
    })
}

/// A client over either the scripted mock or the HTTP endpoint.
pub fn make_client(
    backend: &BackendConfig,
    mock_script: Option<&Path>,
    deterministic: bool,
) -> Result<LlmClient, CliError> {
    let clock: Arc<dyn Clock> = if deterministic {
        Arc::new(ManualClock::new())
    } else {
        Arc::new(SystemClock::new())
    };
    let transport: Arc<dyn Transport> = match mock_script {
        Some(path) => {
            let script = MockScript::load(path)
                .map_err(|e| CliError::invalid(format!("mock_script: {e}")))?;
            Arc::new(
                MockBackend::from_script(script, clock.clone())
                    .map_err(|e| CliError::invalid(format!("mock_script: {e}")))?,
            )
        }
        None if deterministic => {
            return Err(CliError::invalid(
                "mock_script: required in deterministic mode",
            ))
        }
        None => Arc::new(HttpTransport::from_config(backend).map_err(|e| match e {
            ClientError::MissingApiKey { var } => CliError::invalid(format!(
                "backend.api_key_env_var: environment variable {var} is not set"
            )),
            other => CliError::runtime(other),
        })?),
    };
    let client = LlmClient::new(transport, backend.clone(), clock)
        .map_err(|e| CliError::invalid(e.to_string()))?;
    Ok(if deterministic {
        client.with_seed(0)
    } else {
        client
    })
}

fn stats_text(stats: &RunStats) -> String {
    format!(
        "tables_processed     {}\ntables_failed        {}\npairs_generated      {}\npairs_entailed       {}\n\
         pairs_refuted        {}\npairs_verify_failed  {}\nretention_rate       {:.4}\n",
        stats.tables_processed,
        stats.tables_failed,
        stats.pairs_generated,
        stats.pairs_entailed,
        stats.pairs_refuted,
        stats.pairs_verify_failed,
        stats.retention_rate
    )
}

struct GenerateJob<'a> {
    corpus: &'a Corpus,
    corpus_path: &'a Path,
    demo: &'a Demonstration,
    splits: &'a [Split],
    backend: &'a BackendConfig,
    generation: &'a PipelineConfig,
    mock_script: Option<&'a Path>,
    deterministic: bool,
    state_dir: &'a Path,
    options: RunOptions,
}

fn run_generation(job: GenerateJob<'_>) -> Result<PipelineState, CliError> {
    let client = make_client(job.backend, job.mock_script, job.deterministic)?;
    let tables: Vec<_> = job
        .corpus
        .records()
        .iter()
        .filter(|r| job.splits.contains(&r.split))
        .map(|r| r.table.clone())
        .collect();
    let options = RunOptions {
        workers: if job.deterministic {
            1
        } else {
            job.options.workers
        },
        corpus_path: Some(job.corpus_path.display().to_string()),
        ..job.options
    };
    run_pipeline(
        &tables,
        job.demo,
        &client,
        job.generation,
        job.splits,
        job.state_dir,
        &options,
    )
    .map_err(|e| match e {
        crate::pipeline::PipelineError::InvalidConfig(m) => CliError::invalid(m),
        crate::pipeline::PipelineError::StateExists(_)
        | crate::pipeline::PipelineError::ResumeConfigMismatch { .. } => {
            CliError::invalid(e.to_string())
        }
        other => CliError::runtime(other),
    })
}

fn load_demo(path: &Path) -> Result<Demonstration, CliError> {
    Demonstration::load(path).map_err(|e| CliError::invalid(format!("demo: {e}")))
}

fn generate(a: GenerateArgs) -> Result<Outcome, CliError> {
    require_file("corpus", &a.corpus)?;
    require_file("demo", &a.demo)?;
    let mut cfg = match &a.config {
        Some(path) => {
            require_file("config", path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(k) = a.checkpoint_every {
        cfg.checkpoint_every = k;
    }
    if a.mock_script.is_some() {
        cfg.mock_script = a.mock_script.clone();
    }
    cfg.deterministic |= a.deterministic;
    let mut problems: Vec<String> = Vec::new();
    if cfg.workers == 0 {
        problems.push("workers: must be at least 1".into());
    }
    if cfg.checkpoint_every == 0 {
        problems.push("checkpoint_every: must be at least 1".into());
    }
    if let Some(p) = cfg.mock_script.as_ref().filter(|p| !p.is_file()) {
        problems.push(format!("mock_script: file not found: {}", p.display()));
    }
    problems.extend(cfg.backend.violations());
    problems.extend(cfg.generation.violations());
    if !problems.is_empty() {
        return Err(ConfigError::Invalid(problems).into());
    }

    let corpus = load_corpus(&a.corpus, a.setting).map_err(CliError::runtime)?;
    let demo = load_demo(&a.demo)?;
    let state = run_generation(GenerateJob {
        corpus: &corpus,
        corpus_path: &a.corpus,
        demo: &demo,
        splits: &a.splits,
        backend: &cfg.backend,
        generation: &cfg.generation,
        mock_script: cfg.mock_script.as_deref(),
        deterministic: cfg.deterministic,
        state_dir: &a.out,
        options: RunOptions {
            workers: cfg.effective_workers(),
            checkpoint_every: cfg.checkpoint_every,
            resume: a.resume,
            max_tables: a.max_tables,
            corpus_path: None,
        },
    })?;
    let stats = state.stats();
    Ok(Outcome {
        text: stats_text(&stats),
        json: json!({"run_id": state.run_id, "state_dir": a.out, "stats": stats}),
    })
}

fn load_state(dir: &Path) -> Result<PipelineState, CliError> {
    if !PipelineState::exists(dir) {
        return Err(CliError::invalid(format!(
            "--state: no state header in {}",
            dir.display()
        )));
    }
    PipelineState::load(dir).map_err(CliError::runtime)
}

fn filter_stats(a: StateArgs) -> Result<Outcome, CliError> {
    let state = load_state(&a.state)?;
    let stats = state.stats();
    Ok(Outcome {
        text: stats_text(&stats),
        json: json!({"run_id": state.run_id, "stats": stats}),
    })
}

fn emit_to(
    state: &PipelineState,
    corpus: &Corpus,
    mode: EmissionMode,
    out: &Path,
) -> Result<usize, CliError> {
    let examples = emit_examples(state, corpus, mode).map_err(CliError::runtime)?;
    write_examples(out, &examples).map_err(CliError::runtime)
}

fn emit(a: EmitArgs) -> Result<Outcome, CliError> {
    let state = load_state(&a.state)?;
    let corpus_path = match (&a.corpus, &state.corpus) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => {
            return Err(CliError::invalid(
                "--corpus: required (state header records no corpus)",
            ))
        }
    };
    require_file("corpus", &corpus_path)?;
    let corpus = load_corpus(&corpus_path, None).map_err(CliError::runtime)?;
    let corpus = if a.splits.is_empty() {
        corpus
    } else {
        let kept = corpus
            .records()
            .iter()
            .filter(|r| a.splits.contains(&r.split))
            .cloned()
            .collect();
        Corpus::new(kept).map_err(CliError::runtime)?
    };
    let n = emit_to(&state, &corpus, a.mode, &a.out)?;
    Ok(Outcome {
        text: format!("wrote {n} {} examples to {}\n", a.mode, a.out.display()),
        json: json!({"mode": a.mode, "lines": n, "out": a.out}),
    })
}

fn score_section(s: &ScoreSection) -> Result<Outcome, CliError> {
    let report = build_report(
        &s.run_name,
        &s.generations,
        &s.references,
        s.labels.as_deref(),
        &s.meteor,
    )
    .map_err(CliError::runtime)?;
    Ok(Outcome {
        text: render_report(&report),
        json: serde_json::to_value(&report).expect("report serializes"),
    })
}

fn score(a: ScoreArgs) -> Result<Outcome, CliError> {
    require_file("gen", &a.generations)?;
    require_file("ref", &a.references)?;
    if let Some(l) = &a.labels {
        require_file("labels", l)?;
    }
    score_section(&ScoreSection {
        run_name: a.run_name,
        generations: a.generations,
        references: a.references,
        labels: a.labels,
        meteor: MeteorConfig::default(),
    })
}

/// Files written by `run` inside `output_dir`.
pub const RUN_CORPUS_FILE: &str = "corpus.jsonl";
pub const RUN_STATE_DIR: &str = "state";
pub const RUN_STATS_FILE: &str = "stats.json";
pub const RUN_REPORT_FILE: &str = "report.txt";

pub fn run_emit_file(mode: EmissionMode) -> String {
    format!("train.{mode}.jsonl")
}

fn run(a: RunArgs) -> Result<Outcome, CliError> {
    require_file("config", &a.config)?;
    let mut cfg = RunConfig::load(&a.config)?;
    cfg.deterministic |= a.deterministic;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.output_dir.is_some() {
        cfg.output_dir = a.output_dir;
    }
    if a.mock_script.is_some() {
        cfg.mock_script = a.mock_script;
    }
    cfg.validate()?;
    let out_dir = cfg.output_dir.clone().expect("validated");
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;

    let corpus_path = match (&cfg.corpus, &cfg.scigen_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => {
            let setting = cfg.setting.expect("validated");
            let records = scigen::ingest_dir(dir, setting).map_err(CliError::runtime)?;
            let path = out_dir.join(RUN_CORPUS_FILE);
            write_corpus(&path, &records)?;
            path
        }
        (None, None) => unreachable!("validated"),
    };
    let corpus = load_corpus(&corpus_path, cfg.setting).map_err(CliError::runtime)?;
    let demo = load_demo(cfg.demo.as_deref().expect("validated"))?;
    let state_dir = out_dir.join(RUN_STATE_DIR);
    let state = run_generation(GenerateJob {
        corpus: &corpus,
        corpus_path: &corpus_path,
        demo: &demo,
        splits: &cfg.splits,
        backend: &cfg.backend,
        generation: &cfg.generation,
        mock_script: cfg.mock_script.as_deref(),
        deterministic: cfg.deterministic,
        state_dir: &state_dir,
        options: RunOptions {
            workers: cfg.effective_workers(),
            checkpoint_every: cfg.checkpoint_every,
            resume: true,
            max_tables: None,
            corpus_path: None,
        },
    })?;
    let stats = state.stats();
    let stats_path = out_dir.join(RUN_STATS_FILE);
    let stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    fs::write(&stats_path, stats_json)
        .map_err(|e| CliError::runtime(format!("{}: {e}", stats_path.display())))?;

    let emit_path = out_dir.join(run_emit_file(cfg.emit_mode));
    let emit_corpus = if cfg.emit_mode == EmissionMode::Traditional {
        let kept = corpus
            .records()
            .iter()
            .filter(|r| cfg.splits.contains(&r.split))
            .cloned()
            .collect();
        Corpus::new(kept).map_err(CliError::runtime)?
    } else {
        corpus
    };
    let lines = emit_to(&state, &emit_corpus, cfg.emit_mode, &emit_path)?;

    let mut text = stats_text(&stats);
    text.push_str(&format!(
        "emitted {lines} {} examples to {}\n",
        cfg.emit_mode,
        emit_path.display()
    ));
    let mut summary = json!({
        "run_id": state.run_id,
        "stats": stats,
        "emitted": {"mode": cfg.emit_mode, "lines": lines, "path": emit_path},
    });
    if let Some(section) = &cfg.score {
        let scored = score_section(section)?;
        let report_path = out_dir.join(RUN_REPORT_FILE);
        fs::write(&report_path, &scored.text)
            .map_err(|e| CliError::runtime(format!("{}: {e}", report_path.display())))?;
        text.push_str(&scored.text);
        summary["report"] = scored.json;
    }
    Ok(Outcome {
        text,
        json: summary,
    })
}
