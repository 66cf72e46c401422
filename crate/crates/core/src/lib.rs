//! Distill table-grounded chain-of-thought reasoning from a teacher LLM into
//! training data for small sequence-to-sequence students.
//!
//! The pieces, in pipeline order:
//!
//! - [`corpus`]: load and summarize table-to-text records.
//! - [`linearize`]: `<CAP>`/`<R>`/`<C>` serialization and the `T <CoT> R` input.
//! - [`prompt`]: one-shot direct, one-shot CoT, and verification prompts.
//! - [`llm`]: rate-limited, retrying chat-completion client plus a scripted mock.
//! - [`pipeline`]: generation, self-verification, filtering, resumable state, emission.
//! - [`metrics`]: METEOR (exact + Porter-stem stages) and faithfulness-label accuracy.
//! - [`cli`]: the `tabdistill` command line.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod linearize;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
