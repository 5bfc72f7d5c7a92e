//! Command-line thesis assessment built on `pemuta-core`.
//!
//! The pipeline reads `.layout.jsonl` page layouts, rebuilds each thesis as
//! a structured document, prompts a chat model with the six-dimension
//! rubric and turns the replies into scored reports. The evaluation harness
//! compares predictions with expert scores and runs ablation matrices.

pub mod cli;
pub mod config;
pub mod harness;
pub mod llmclient;
pub mod mock;
pub mod openai;
pub mod pipeline;

pub use llmclient::{ChatRequest, ChatResponse, Client, ClientError, PacingPolicy, Provider};
pub use mock::{MockProvider, Script};
pub use pipeline::{Assessor, PipelineError};
