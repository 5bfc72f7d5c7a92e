//! Pure building blocks for rubric-based LLM assessment of undergraduate theses.
//!
//! The crate is `no_std` (with `alloc`) and performs no IO. It covers:
//!
//! - [`layout`]: the line-delimited layout interchange format and page-furniture
//!   classification.
//! - [`reconstruct`]: section detection, paragraph merging, placeholder
//!   insertion and the canonical document serialization.
//! - [`rubric`]: the six assessment dimensions, the 0–10 score scale and
//!   aggregation weight profiles.
//! - [`prompting`]: composite, staged and standard prompt bundles, few-shot
//!   exemplars and the role-play preamble.
//! - [`report`]: reply parsing, weighted holistic aggregation and report
//!   rendering.
//! - [`metrics`]: expert-annotated records, MAE/MSE/PCC, dataset statistics
//!   and the ablation presets.
//!
//! Networking, file formats on disk and the command line live in the `pemuta`
//! companion crate.
#![no_std]
#![deny(unused_must_use, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod chat;
pub mod json;
pub mod layout;
pub mod metrics;
pub mod prompting;
pub mod reconstruct;
pub mod report;
pub mod rubric;

pub use chat::{ChatMessage, Role};
pub use layout::{
    classify_furniture, parse_layout_stream, ElementKind, LayoutElement, LayoutStream,
};
pub use metrics::{DatasetRecord, EvalResult, ScoreSeries, Target};
pub use prompting::{PromptBundle, PromptConfig, PromptMode};
pub use reconstruct::{reconstruct, ReconstructedDocument};
pub use report::{aggregate_holistic, AssessmentReport};
pub use rubric::{Dimension, DimensionScores, Score, WeightProfile};
