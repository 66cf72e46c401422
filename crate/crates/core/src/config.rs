//! The TOML run configuration shared by `generate` and `run`.
//!
//! ```toml
//! corpus = "data/medium.jsonl"      # or: scigen_dir = "SciGen/dataset" (needs `setting`)
//! setting = "medium"
//! splits = ["train"]
//! demo = "assets/demonstration.json"
//! output_dir = "runs/medium"
//! workers = 4
//! checkpoint_every = 25
//! emit_mode = "cot_input"
//! deterministic = false
//! mock_script = "script.json"       # required when deterministic = true
//!
//! [backend]
//! endpoint_url = "https://api.openai.com/v1/chat/completions"
//! api_key_env_var = "OPENAI_API_KEY"
//!
//! [generation]
//! model_name = "gpt-4"
//!
//! [score]                           # optional
//! run_name = "t5-base-cot"
//! generations = "gen.jsonl"
//! references = "ref.jsonl"
//! labels = "labels.jsonl"
//! ```
//!
//! Relative paths are resolved against the config file's directory. Unknown
//! keys are rejected. API keys are never read from the file, only from the
//! environment variable it names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Setting, Split};
use crate::llm::BackendConfig;
use crate::metrics::MeteorConfig;
use crate::pipeline::{EmissionMode, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    pub run_name: String,
    pub generations: PathBuf,
    pub references: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub meteor: MeteorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub scigen_dir: Option<PathBuf>,
    #[serde(default)]
    pub setting: Option<Setting>,
    #[serde(default = "default_splits")]
    pub splits: Vec<Split>,
    #[serde(default)]
    pub demo: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_emit_mode")]
    pub emit_mode: EmissionMode,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub generation: PipelineConfig,
    #[serde(default)]
    pub score: Option<ScoreSection>,
}

fn default_splits() -> Vec<Split> {
    vec![Split::Train]
}

fn default_workers() -> usize {
    1
}

fn default_checkpoint_every() -> usize {
    25
}

fn default_emit_mode() -> EmissionMode {
    EmissionMode::CotInput
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            scigen_dir: None,
            setting: None,
            splits: default_splits(),
            demo: None,
            output_dir: None,
            workers: default_workers(),
            checkpoint_every: default_checkpoint_every(),
            emit_mode: default_emit_mode(),
            deterministic: false,
            mock_script: None,
            backend: BackendConfig::default(),
            generation: PipelineConfig::default(),
            score: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {reason}", path.display())]
    Unreadable { path: PathBuf, reason: String },
    #[error("config validation failed:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parses a config file and resolves its relative paths. Does not validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Invalid(vec![e.to_string().trim().to_string()]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.scigen_dir,
            &mut self.demo,
            &mut self.output_dir,
            &mut self.mock_script,
        ] {
            resolve(base, p);
        }
        if let Some(score) = &mut self.score {
            for p in [&mut score.generations, &mut score.references] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            resolve(base, &mut score.labels);
        }
    }

    /// Every violated field, by name. Empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let file = |out: &mut Vec<String>, field: &str, p: &Option<PathBuf>| match p {
            Some(p) if !p.is_file() => {
                out.push(format!("{field}: file not found: {}", p.display()))
            }
            _ => {}
        };
        match (&self.corpus, &self.scigen_dir) {
            (None, None) => out.push("corpus: one of `corpus` or `scigen_dir` is required".into()),
            (Some(_), Some(_)) => {
                out.push("corpus: `corpus` and `scigen_dir` are mutually exclusive".into())
            }
            _ => {}
        }
        file(&mut out, "corpus", &self.corpus);
        if let Some(dir) = &self.scigen_dir {
            if !dir.is_dir() {
                out.push(format!(
                    "scigen_dir: directory not found: {}",
                    dir.display()
                ));
            }
            if self.setting.is_none() {
                out.push("setting: required with `scigen_dir`".into());
            }
        }
        if self.splits.is_empty() {
            out.push("splits: must name at least one split".into());
        }
        match &self.demo {
            None => out.push("demo: required".into()),
            Some(_) => file(&mut out, "demo", &self.demo),
        }
        if self.output_dir.is_none() {
            out.push("output_dir: required".into());
        }
        if self.workers == 0 {
            out.push("workers: must be at least 1".into());
        }
        if self.checkpoint_every == 0 {
            out.push("checkpoint_every: must be at least 1".into());
        }
        if self.deterministic && self.mock_script.is_none() {
            out.push("mock_script: required when `deterministic` is set".into());
        }
        file(&mut out, "mock_script", &self.mock_script);
        out.extend(self.backend.violations());
        out.extend(self.generation.violations());
        if let Some(score) = &self.score {
            if score.run_name.trim().is_empty() {
                out.push("score.run_name: must not be empty".into());
            }
            file(
                &mut out,
                "score.generations",
                &Some(score.generations.clone()),
            );
            file(
                &mut out,
                "score.references",
                &Some(score.references.clone()),
            );
            file(&mut out, "score.labels", &score.labels);
            out.extend(score.meteor.violations());
        }
        out
    }

    /// Deterministic runs use one worker and the scripted backend.
    pub fn effective_workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.workers
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}
