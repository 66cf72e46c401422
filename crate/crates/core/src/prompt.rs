//! Teacher prompts: one-shot direct, one-shot CoT with diverse reasoning, and
//! yes/no verification.
//!
//! Every builder is pure. The target table always comes after the
//! demonstration, and a CoT prompt asks the teacher to label its output as
//! `Reasoning k:` / `Description k:` sections.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{word_count, RecordError, ScientificTable};
use crate::linearize::{linearize_table, LinearizeError};
use crate::llm::ChatMessage;

/// Pairs requested per table by the CoT variant.
pub const DIVERSE_PAIR_COUNT: usize = 2;

/// Default context window of the teacher, in estimated tokens.
pub const DEFAULT_CONTEXT_LIMIT: usize = 4096;

const TABLE_FORMAT_NOTE: &str = "Tables are linearized with <CAP> before the caption, <R> at the start of each row and <C> at the start of each cell.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningPair {
    #[serde(default)]
    pub reasoning: String,
    pub description: String,
}

/// The hand-crafted one-shot example: a table with its reasoning/description pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub table: ScientificTable,
    #[serde(rename = "pairs")]
    pub reasoning_pairs: Vec<ReasoningPair>,
}

impl Demonstration {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|e| PromptError::DemoUnreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let demo: Demonstration =
            serde_json::from_str(&text).map_err(|e| PromptError::DemoUnreadable {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        demo.table.validate()?;
        if demo.reasoning_pairs.is_empty() {
            return Err(PromptError::InvalidDemonstration(
                "at least one description is required".into(),
            ));
        }
        Ok(demo)
    }

    fn check_cot(&self, pairs: usize) -> Result<&[ReasoningPair], PromptError> {
        if self.reasoning_pairs.len() < pairs {
            return Err(PromptError::InvalidDemonstration(format!(
                "CoT prompt needs {pairs} reasoning pairs, demonstration has {}",
                self.reasoning_pairs.len()
            )));
        }
        let used = &self.reasoning_pairs[..pairs];
        if let Some(i) = used
            .iter()
            .position(|p| p.reasoning.trim().is_empty() || p.description.trim().is_empty())
        {
            return Err(PromptError::InvalidDemonstration(format!(
                "pair {} has an empty reasoning or description",
                i + 1
            )));
        }
        Ok(used)
    }

    fn direct_description(&self) -> Result<&str, PromptError> {
        self.reasoning_pairs
            .iter()
            .map(|p| p.description.trim())
            .find(|d| !d.is_empty())
            .ok_or_else(|| PromptError::InvalidDemonstration("no non-empty description".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    DirectOneShot,
    CotOneShot,
    Verification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPrompt {
    pub messages: Vec<ChatMessage>,
    pub variant: PromptVariant,
    pub target_table_id: String,
    pub requested_pair_count: usize,
}

impl GenerationPrompt {
    /// Plain-text rendering used by the `prompt` subcommand and golden files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!("[{}]\n{}", m.role.as_str(), m.content));
        }
        out.push('\n');
        out
    }

    pub fn word_count(&self) -> usize {
        self.messages.iter().map(|m| word_count(&m.content)).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs ~{estimate} tokens, over the limit of {limit}")]
    TokenBudgetExceeded { estimate: usize, limit: usize },
    #[error("token limit must be positive")]
    InvalidLimit,
    #[error("description is empty")]
    EmptyDescription,
    #[error("invalid demonstration: {0}")]
    InvalidDemonstration(String),
    #[error("cannot load demonstration {path}: {reason}")]
    DemoUnreadable { path: String, reason: String },
    #[error("requested pair count {0} is not 1 or 2")]
    InvalidPairCount(usize),
    #[error(transparent)]
    Table(#[from] RecordError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
}

/// Estimated tokens: ceil(1.3 x whitespace words over all message contents).
pub fn estimate_token_budget(
    prompt: &GenerationPrompt,
    limit: usize,
) -> Result<usize, PromptError> {
    if limit == 0 {
        return Err(PromptError::InvalidLimit);
    }
    let estimate = (prompt.word_count() * 13).div_ceil(10);
    if estimate > limit {
        return Err(PromptError::TokenBudgetExceeded { estimate, limit });
    }
    Ok(estimate)
}

fn checked(prompt: GenerationPrompt, limit: usize) -> Result<GenerationPrompt, PromptError> {
    estimate_token_budget(&prompt, limit)?;
    Ok(prompt)
}

fn label_word(n: usize) -> &'static str {
    match n {
        1 => "one reasoning",
        _ => "two different reasonings",
    }
}

/// One-shot CoT prompt requesting two (reasoning, description) pairs.
pub fn build_cot_prompt(
    demo: &Demonstration,
    table: &ScientificTable,
    limit: usize,
) -> Result<GenerationPrompt, PromptError> {
    build_cot_prompt_with_pairs(demo, table, DIVERSE_PAIR_COUNT, limit)
}

/// CoT prompt with an explicit pair count (1 or 2), for ablations.
pub fn build_cot_prompt_with_pairs(
    demo: &Demonstration,
    table: &ScientificTable,
    pairs: usize,
    limit: usize,
) -> Result<GenerationPrompt, PromptError> {
    if !(1..=DIVERSE_PAIR_COUNT).contains(&pairs) {
        return Err(PromptError::InvalidPairCount(pairs));
    }
    let demo_pairs = demo.check_cot(pairs)?;

    let mut format = String::from("Format your answer exactly as:");
    for k in 1..=pairs {
        format.push_str(&format!("\nReasoning {k}: ...\nDescription {k}: ..."));
    }
    let system = format!(
        "You are an expert at reading scientific tables and reasoning over their values.\n\
         {TABLE_FORMAT_NOTE}\n\
         Given a table, write {} over its values, each followed by a description that is \
         factually consistent with the table. Each reasoning should focus on a different part \
         of the table or a different operation such as comparison, difference or ranking.\n\
         {format}",
        label_word(pairs)
    );

    let mut user = format!("Example table:\n{}\n", linearize_table(&demo.table)?.text);
    for (k, pair) in demo_pairs.iter().enumerate() {
        user.push_str(&format!(
            "\nReasoning {n}: {}\nDescription {n}: {}",
            pair.reasoning.trim(),
            pair.description.trim(),
            n = k + 1
        ));
    }
    user.push_str(&format!("\n\nTable:\n{}", linearize_table(table)?.text));

    checked(
        GenerationPrompt {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            variant: PromptVariant::CotOneShot,
            target_table_id: table.table_id.clone(),
            requested_pair_count: pairs,
        },
        limit,
    )
}

/// One-shot direct prompt: demonstration table and description, then the target.
pub fn build_direct_prompt(
    demo: &Demonstration,
    table: &ScientificTable,
    limit: usize,
) -> Result<GenerationPrompt, PromptError> {
    let description = demo.direct_description()?;
    let system = format!(
        "You are an expert at reading scientific tables.\n\
         {TABLE_FORMAT_NOTE}\n\
         Given a table, write a description that is factually consistent with the table.\n\
         Format your answer exactly as:\nDescription: ..."
    );
    let user = format!(
        "Example table:\n{}\n\nDescription: {}\n\nTable:\n{}",
        linearize_table(&demo.table)?.text,
        description,
        linearize_table(table)?.text
    );
    checked(
        GenerationPrompt {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            variant: PromptVariant::DirectOneShot,
            target_table_id: table.table_id.clone(),
            requested_pair_count: 1,
        },
        limit,
    )
}

/// Strict yes/no consistency check of a description against its table.
pub fn build_verification_prompt(
    table: &ScientificTable,
    description: &str,
    limit: usize,
) -> Result<GenerationPrompt, PromptError> {
    if description.trim().is_empty() {
        return Err(PromptError::EmptyDescription);
    }
    let system = format!(
        "You check whether descriptions of scientific tables are factually consistent with the table.\n\
         {TABLE_FORMAT_NOTE}"
    );
    let user = format!(
        "Table:\n{}\n\nDescription:\n{}\n\nIs the description factually consistent with the table? \
         Answer with exactly Yes or No.",
        linearize_table(table)?.text,
        description.trim()
    );
    checked(
        GenerationPrompt {
            messages: vec![ChatMessage::system(system), ChatMessage::user(user)],
            variant: PromptVariant::Verification,
            target_table_id: table.table_id.clone(),
            requested_pair_count: 0,
        },
        limit,
    )
}
