//! Turning one reconstructed thesis into an assessment through a client.

use std::path::Path;

use pemuta_core::chat::ChatMessage;
use pemuta_core::layout::{classify_furniture, parse_layout_stream, LayoutError};
use pemuta_core::metrics::MetricError;
use pemuta_core::prompting::{
    build_composite_prompt, build_stage_prompts, build_standard_prompt, derive_seed,
    select_exemplars, Exemplar, PromptBundle, PromptConfig, PromptError, PromptMode, Templates,
};
use pemuta_core::reconstruct::{self, ReconstructError, ReconstructedDocument};
use pemuta_core::report::{
    finalize_report, parse_dimension_reply, parse_feedback_reply, parse_reply, Assessment,
    HolisticOnlyResult, ParsedReply, ReportError, ReportProvenance, Seeds,
};

use crate::llmclient::{ChatRequest, Client, ClientError, DEFAULT_MAX_OUTPUT_TOKENS};

/// Follow-up sent once when a reply has no parseable block.
pub const REASK_MESSAGE: &str =
    "Reply only with the fenced JSON block described above, with no other text.";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Manifest(String),
    #[error("{0}")]
    Config(String),
}

impl PipelineError {
    /// Name of the originating error, as printed by the CLI.
    pub fn name(&self) -> &'static str {
        match self {
            PipelineError::Layout(e) => e.name(),
            PipelineError::Reconstruct(e) => e.name(),
            PipelineError::Prompt(e) => e.name(),
            PipelineError::Client(e) => e.name(),
            PipelineError::Report(e) => e.name(),
            PipelineError::Metric(e) => e.name(),
            PipelineError::Io { .. } => "IoError",
            PipelineError::Manifest(_) => "ManifestError",
            PipelineError::Config(_) => "ConfigError",
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Loads a thesis from `.doc.json`, or reconstructs it from `.layout.jsonl`.
pub fn load_document(path: &Path) -> Result<ReconstructedDocument, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    if name.ends_with(".layout.jsonl") || name.ends_with(".jsonl") {
        let text = String::from_utf8(bytes).map_err(|e| PipelineError::io(path, e))?;
        ingest_layout(&text, &source_id_for(path))
    } else {
        Ok(reconstruct::from_json(&bytes)?)
    }
}

/// Parses, strips furniture and reconstructs a layout stream.
pub fn ingest_layout(text: &str, source_id: &str) -> Result<ReconstructedDocument, PipelineError> {
    let stream = classify_furniture(&parse_layout_stream(text, source_id)?);
    Ok(reconstruct::reconstruct(&stream)?)
}

/// File name with the `.layout.jsonl` / `.doc.json` suffix removed.
pub fn source_id_for(path: &Path) -> String {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("document");
    for suffix in [".layout.jsonl", ".doc.json", ".jsonl", ".json"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name.to_string()
}

/// Everything needed to assess theses besides the documents themselves.
pub struct Assessor<'a> {
    pub client: &'a Client,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub templates: Templates,
    pub pool: Vec<Exemplar>,
}

impl<'a> Assessor<'a> {
    pub fn new(client: &'a Client, model_id: impl Into<String>, pool: Vec<Exemplar>) -> Self {
        Assessor {
            client,
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            templates: Templates::default(),
            pool,
        }
    }

    fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model_id: self.model_id.clone(),
            messages,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    /// Sends a bundle and parses the reply, re-asking once if the reply has
    /// no structured block.
    fn ask<T>(
        &self,
        bundle: &PromptBundle,
        reasks: &mut u32,
        parse: impl Fn(&str) -> Result<T, ReportError>,
    ) -> Result<T, PipelineError> {
        let first = self.client.chat(&self.request(bundle.messages.clone()))?;
        match parse(&first.content) {
            Err(ReportError::NoStructuredBlock) => {
                *reasks += 1;
                let mut messages = bundle.messages.clone();
                messages.push(ChatMessage::assistant(first.content));
                messages.push(ChatMessage::user(REASK_MESSAGE));
                let second = self.client.chat(&self.request(messages))?;
                Ok(parse(&second.content)?)
            }
            other => Ok(other?),
        }
    }

    /// Runs the configured prompting strategy on one thesis.
    pub fn assess(
        &self,
        doc: &ReconstructedDocument,
        config: &PromptConfig,
    ) -> Result<Assessment, PipelineError> {
        let exemplar_seed = derive_seed(config.random_seed(), &doc.source_id);
        let exemplars = select_exemplars(
            &self.pool,
            config.shot_count(),
            exemplar_seed,
            Some(&doc.source_id),
        )?;
        let mut provenance =
            ReportProvenance::from_config(config, &self.model_id, self.templates.hash());
        provenance.seeds = Seeds {
            run_seed: config.random_seed(),
            exemplar_seed,
        };
        provenance.temperature = self.temperature;
        provenance.exemplar_ids = exemplars.iter().map(|e| e.source_id.clone()).collect();
        let mut reasks = 0;
        let outcome = match config.mode() {
            PromptMode::Composite => {
                let bundle = build_composite_prompt(doc, config, &exemplars, &self.templates)?;
                provenance
                    .prompt_hashes
                    .push(bundle.provenance_hash.clone());
                let parsed = self.ask(&bundle, &mut reasks, |t| {
                    parse_reply(t, PromptMode::Composite)
                })?;
                provenance.reasks = reasks;
                Assessment::Report(finalize_report(doc.source_id.clone(), parsed, provenance)?)
            }
            PromptMode::Staged => {
                let staged = build_stage_prompts(doc, config, &exemplars, &self.templates)?;
                let mut assessments = Vec::with_capacity(6);
                for (d, bundle) in &staged.dimensions {
                    provenance
                        .prompt_hashes
                        .push(bundle.provenance_hash.clone());
                    assessments
                        .push(self.ask(bundle, &mut reasks, |t| parse_dimension_reply(t, *d))?);
                }
                let synthesis = staged.synthesis.build(&assessments)?;
                provenance
                    .prompt_hashes
                    .push(synthesis.provenance_hash.clone());
                let feedback = self.ask(&synthesis, &mut reasks, parse_feedback_reply)?;
                provenance.reasks = reasks;
                let parsed = ParsedReply {
                    assessments,
                    stated_holistic: None,
                    feedback: Some(feedback),
                };
                Assessment::Report(finalize_report(doc.source_id.clone(), parsed, provenance)?)
            }
            PromptMode::Standard => {
                let bundle = build_standard_prompt(doc, config, &self.templates)?;
                provenance
                    .prompt_hashes
                    .push(bundle.provenance_hash.clone());
                let parsed = self.ask(&bundle, &mut reasks, |t| {
                    parse_reply(t, PromptMode::Standard)
                })?;
                provenance.reasks = reasks;
                Assessment::HolisticOnly(HolisticOnlyResult::from_parsed(
                    doc.source_id.clone(),
                    &parsed,
                    provenance,
                )?)
            }
        };
        Ok(outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llmclient::PacingPolicy;
    use crate::mock::{MockProvider, Predicate, Rule, Script};
    use pemuta_core::reconstruct::{Block, DocumentStats, Paragraph, Section, SectionLabel};

    fn doc() -> ReconstructedDocument {
        ReconstructedDocument {
            source_id: "t-9".into(),
            title: "Thesis".into(),
            sections: vec![Section {
                label: SectionLabel::Abstract,
                heading_text: "Abstract".into(),
                blocks: vec![Block::Paragraph(Paragraph {
                    text: "We study frogs.".into(),
                })],
            }],
            stats: DocumentStats::default(),
        }
    }

    const BLOCK: &str = "```json\n{\"structure\": {\"score\": 8, \"justification\": \"a\"}, \"logic\": {\"score\": 8, \"justification\": \"a\"}, \"originality\": {\"score\": 8, \"justification\": \"a\"}, \"writing\": {\"score\": 8, \"justification\": \"a\"}, \"proficiency\": {\"score\": 8, \"justification\": \"a\"}, \"rigor\": {\"score\": 8, \"justification\": \"a\"}, \"feedback\": \"fine\"}\n```";

    #[test]
    fn reask_recovers_once() {
        let script = Script {
            rules: vec![
                Rule {
                    when: Predicate::Contains(REASK_MESSAGE.into()),
                    reply: Some(BLOCK.into()),
                    error: None,
                    times: None,
                },
                Rule {
                    when: Predicate::Always,
                    reply: Some("Looks good to me!".into()),
                    error: None,
                    times: None,
                },
            ],
        };
        let client = Client::new(
            Box::new(MockProvider::new(script)),
            PacingPolicy::immediate(),
        );
        let assessor = Assessor::new(&client, "mock", Vec::new());
        let config = PromptConfig::new(PromptMode::Composite, true, 0).unwrap();
        let Assessment::Report(r) = assessor.assess(&doc(), &config).unwrap() else {
            panic!("expected report")
        };
        assert_eq!(r.provenance.reasks, 1);
        assert_eq!(r.holistic.value(), 8.0);
        assert_eq!(client.dispatch_times().len(), 2);
    }

    #[test]
    fn second_failure_surfaces() {
        let script = Script {
            rules: vec![Rule {
                when: Predicate::Always,
                reply: Some("no block".into()),
                error: None,
                times: None,
            }],
        };
        let client = Client::new(
            Box::new(MockProvider::new(script)),
            PacingPolicy::immediate(),
        );
        let assessor = Assessor::new(&client, "mock", Vec::new());
        let err = assessor
            .assess(
                &doc(),
                &PromptConfig::new(PromptMode::Composite, false, 0).unwrap(),
            )
            .unwrap_err();
        assert_eq!(err.name(), "NoStructuredBlock");
    }

    #[test]
    fn staged_mode_makes_seven_calls() {
        let script = Script {
            rules: vec![Rule {
                when: Predicate::Always,
                reply: Some(BLOCK.into()),
                error: None,
                times: None,
            }],
        };
        let client = Client::new(
            Box::new(MockProvider::new(script)),
            PacingPolicy::immediate(),
        );
        let assessor = Assessor::new(&client, "mock", Vec::new());
        let config = PromptConfig::new(PromptMode::Staged, false, 0).unwrap();
        let Assessment::Report(r) = assessor.assess(&doc(), &config).unwrap() else {
            panic!("expected report")
        };
        assert_eq!(r.provenance.prompt_hashes.len(), 7);
        assert_eq!(r.feedback, "fine");
        assert_eq!(client.dispatch_times().len(), 7);
    }

    #[test]
    fn source_ids() {
        assert_eq!(source_id_for(Path::new("a/b/x1.layout.jsonl")), "x1");
        assert_eq!(source_id_for(Path::new("x2.doc.json")), "x2");
    }
}
