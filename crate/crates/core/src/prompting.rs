//! Prompt construction: composite, staged and standard bundles, few-shot
//! exemplars and the role-play preamble.
//!
//! All builders are pure functions of the document, the configuration, the
//! chosen exemplars and the template set.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chat::{ChatMessage, Role};
use crate::metrics::{DatasetRecord, Target};
use crate::reconstruct::{render_text, ReconstructedDocument};
use crate::report::DimensionAssessment;
use crate::rubric::{Dimension, DimensionScores, Score, WeightProfile};

/// Persona used for the role-play system message unless overridden.
pub const DEFAULT_PERSONA: &str =
    "You are a university professor responsible for evaluating students' submitted undergraduate thesis.";

/// Exemplars per prompt when not configured otherwise.
pub const DEFAULT_SHOT_COUNT: usize = 2;

/// Default context budget in estimated tokens.
pub const DEFAULT_CONTEXT_BUDGET: usize = 131_072;

/// Rough token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// One call covering all six dimensions and the feedback.
    #[default]
    Composite,
    /// One call per dimension, then a feedback synthesis call.
    Staged,
    /// Single holistic instruction, no rubric.
    Standard,
}

impl PromptMode {
    pub const fn as_str(self) -> &'static str {
        match self {
            PromptMode::Composite => "composite",
            PromptMode::Staged => "staged",
            PromptMode::Standard => "standard",
        }
    }

    pub fn parse(s: &str) -> Option<PromptMode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "composite" => Some(PromptMode::Composite),
            "staged" => Some(PromptMode::Staged),
            "standard" => Some(PromptMode::Standard),
            _ => None,
        }
    }

    /// Whether the rubric instructions are part of the prompt.
    pub const fn is_hierarchical(self) -> bool {
        !matches!(self, PromptMode::Standard)
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
    #[error("record {id} has no {target} score")]
    MissingScore { id: String, target: Target },
    #[error("exemplar pool has {available} eligible entries, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("prompt needs an estimated {estimated} tokens, budget is {budget}")]
    DocumentTooLarge { estimated: usize, budget: usize },
}

impl PromptError {
    pub fn name(&self) -> &'static str {
        match self {
            PromptError::InvalidConfig(_) => "InvalidConfig",
            PromptError::MissingScore { .. } => "MissingScore",
            PromptError::PoolTooSmall { .. } => "PoolTooSmall",
            PromptError::DocumentTooLarge { .. } => "DocumentTooLarge",
        }
    }
}

/// Which prompt components are switched on.
///
/// Standard mode carries no rubric instructions and no exemplars; role play
/// needs a non-empty persona. Both rules are enforced by every constructor,
/// including deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPromptConfig", into = "RawPromptConfig")]
pub struct PromptConfig {
    mode: PromptMode,
    use_role_play: bool,
    shot_count: usize,
    weight_profile: WeightProfile,
    random_seed: u64,
    persona_text: String,
    context_budget: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPromptConfig {
    mode: PromptMode,
    use_role_play: bool,
    shot_count: usize,
    weight_profile: WeightProfile,
    random_seed: u64,
    persona_text: String,
    context_budget: usize,
}

impl TryFrom<RawPromptConfig> for PromptConfig {
    type Error = PromptError;

    fn try_from(raw: RawPromptConfig) -> Result<Self, Self::Error> {
        let config = PromptConfig {
            mode: raw.mode,
            use_role_play: raw.use_role_play,
            shot_count: raw.shot_count,
            weight_profile: raw.weight_profile,
            random_seed: raw.random_seed,
            persona_text: raw.persona_text,
            context_budget: raw.context_budget,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<PromptConfig> for RawPromptConfig {
    fn from(c: PromptConfig) -> Self {
        RawPromptConfig {
            mode: c.mode,
            use_role_play: c.use_role_play,
            shot_count: c.shot_count,
            weight_profile: c.weight_profile,
            random_seed: c.random_seed,
            persona_text: c.persona_text,
            context_budget: c.context_budget,
        }
    }
}

impl PromptConfig {
    pub fn new(
        mode: PromptMode,
        use_role_play: bool,
        shot_count: usize,
    ) -> Result<Self, PromptError> {
        let config = PromptConfig {
            mode,
            use_role_play,
            shot_count,
            weight_profile: WeightProfile::default(),
            random_seed: 0,
            persona_text: DEFAULT_PERSONA.to_string(),
            context_budget: DEFAULT_CONTEXT_BUDGET,
        };
        config.validate()?;
        Ok(config)
    }

    /// Hierarchical composite prompt with role play and two exemplars.
    pub fn full() -> Self {
        PromptConfig::new(PromptMode::Composite, true, DEFAULT_SHOT_COUNT).expect("valid preset")
    }

    /// The single-instruction holistic baseline.
    pub fn standard() -> Self {
        PromptConfig::new(PromptMode::Standard, false, 0).expect("valid preset")
    }

    fn validate(&self) -> Result<(), PromptError> {
        if self.mode == PromptMode::Standard && self.shot_count > 0 {
            return Err(PromptError::InvalidConfig(format!(
                "standard mode takes no exemplars, {} requested",
                self.shot_count
            )));
        }
        if self.use_role_play && self.persona_text.trim().is_empty() {
            return Err(PromptError::InvalidConfig(
                "role play needs a non-empty persona".into(),
            ));
        }
        if self.context_budget == 0 {
            return Err(PromptError::InvalidConfig(
                "context budget must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_persona(mut self, persona: impl Into<String>) -> Result<Self, PromptError> {
        self.persona_text = persona.into();
        self.validate()?;
        Ok(self)
    }

    pub fn with_weights(mut self, profile: WeightProfile) -> Self {
        self.weight_profile = profile;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.random_seed = seed;
        self
    }

    pub fn with_context_budget(mut self, tokens: usize) -> Result<Self, PromptError> {
        self.context_budget = tokens;
        self.validate()?;
        Ok(self)
    }

    pub fn mode(&self) -> PromptMode {
        self.mode
    }

    pub fn use_role_play(&self) -> bool {
        self.use_role_play
    }

    pub fn shot_count(&self) -> usize {
        self.shot_count
    }

    pub fn weight_profile(&self) -> &WeightProfile {
        &self.weight_profile
    }

    pub fn random_seed(&self) -> u64 {
        self.random_seed
    }

    pub fn persona_text(&self) -> &str {
        &self.persona_text
    }

    pub fn context_budget(&self) -> usize {
        self.context_budget
    }
}

/// Prompt wording, one entry per template file.
///
/// Templates use `{{name}}` placeholders; substitution is single-pass, so
/// braces inside the thesis text are never expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    entries: [(&'static str, String); 10],
}

impl Templates {
    /// File stems, in hashing order.
    pub const NAMES: [&'static str; 10] = [
        "composite",
        "dimension_item",
        "staged",
        "synthesis",
        "standard",
        "exemplars",
        "reply_composite",
        "reply_dimension",
        "reply_feedback",
        "reply_standard",
    ];

    /// Replaces one template; returns false for an unknown name.
    pub fn set(&mut self, name: &str, text: impl Into<String>) -> bool {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(entry) => {
                entry.1 = text.into();
                true
            }
            None => false,
        }
    }

    pub fn get(&self, name: &str) -> &str {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.as_str())
            .unwrap_or_default()
    }

    /// Hex SHA-256 over all templates in [`Templates::NAMES`] order.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, text) in &self.entries {
            hasher.update(name.as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
        }
        hex(&hasher.finalize())
    }
}

impl Default for Templates {
    fn default() -> Self {
        let texts = [
            include_str!("../templates/composite.txt"),
            include_str!("../templates/dimension_item.txt"),
            include_str!("../templates/staged.txt"),
            include_str!("../templates/synthesis.txt"),
            include_str!("../templates/standard.txt"),
            include_str!("../templates/exemplars.txt"),
            include_str!("../templates/reply_composite.txt"),
            include_str!("../templates/reply_dimension.txt"),
            include_str!("../templates/reply_feedback.txt"),
            include_str!("../templates/reply_standard.txt"),
        ];
        let mut i = 0;
        Templates {
            entries: Templates::NAMES.map(|name| {
                let text = texts[i].to_owned();
                i += 1;
                (name, text)
            }),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Substitutes `{{name}}` placeholders in one pass. Unknown placeholders are
/// left untouched.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, value)) => out.push_str(value),
                    None => out.push_str(&rest[open..open + 4 + close]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// A scored sample assessment shown to the model. Carries no rationale text.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub source_id: String,
    pub scores: DimensionScores,
    pub holistic: Score,
    /// Six `Name: score` lines followed by `Holistic: score`.
    pub formatted_text: String,
}

fn score_text(s: Score) -> String {
    // Debug keeps stored values verbatim (8.15 stays 8.15) and always shows a decimal point
    format!("{:?}", s.value())
}

impl Exemplar {
    /// The exemplar wrapped in `<exemplar>` markers.
    pub fn block(&self) -> String {
        format!(
            "<exemplar id=\"{}\">\n{}\n</exemplar>",
            self.source_id, self.formatted_text
        )
    }

    /// The block restricted to a single dimension, for staged prompts.
    pub fn block_for(&self, dimension: Dimension) -> String {
        format!(
            "<exemplar id=\"{}\">\n{}: {}\n</exemplar>",
            self.source_id,
            dimension.name(),
            score_text(self.scores[dimension])
        )
    }
}

/// Formats a pool record as a score-only exemplar, rendering stored values verbatim.
pub fn format_exemplar(record: &DatasetRecord) -> Result<Exemplar, PromptError> {
    if let Some(target) = record.first_missing() {
        return Err(PromptError::MissingScore {
            id: record.id.clone(),
            target,
        });
    }
    let scores = record.dimension_scores().expect("checked complete");
    let holistic = record.holistic().expect("checked complete");
    let mut lines: Vec<String> = scores
        .iter()
        .map(|(d, s)| format!("{}: {}", d.name(), score_text(s)))
        .collect();
    lines.push(format!("Holistic: {}", score_text(holistic)));
    Ok(Exemplar {
        source_id: record.id.clone(),
        scores,
        holistic,
        formatted_text: lines.join("\n"),
    })
}

/// Seed for one thesis, derived from the run seed and the thesis id.
pub fn derive_seed(run_seed: u64, thesis_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(run_seed.to_le_bytes());
    hasher.update(thesis_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// Draws `k` exemplars without replacement, skipping `exclude_id`.
///
/// Deterministic in `seed`; the result keeps pool order.
pub fn select_exemplars(
    pool: &[Exemplar],
    k: usize,
    seed: u64,
    exclude_id: Option<&str>,
) -> Result<Vec<Exemplar>, PromptError> {
    let eligible: Vec<&Exemplar> = pool
        .iter()
        .filter(|e| Some(e.source_id.as_str()) != exclude_id)
        .collect();
    if k > eligible.len() {
        return Err(PromptError::PoolTooSmall {
            requested: k,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| eligible[i].clone()).collect())
}

/// What a bundle asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dimension", rename_all = "lowercase")]
pub enum BundlePurpose {
    /// All six dimensions plus feedback in one reply.
    Composite,
    /// One dimension of a staged assessment.
    Dimension(Dimension),
    /// Feedback synthesis over six staged results.
    Synthesis,
    /// A single holistic score.
    Standard,
}

/// Ordered chat messages for one model call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    pub mode: PromptMode,
    pub purpose: BundlePurpose,
    /// Hex SHA-256 of the configuration, document id, exemplar ids and purpose.
    pub provenance_hash: String,
}

impl PromptBundle {
    pub fn system_message(&self) -> Option<&ChatMessage> {
        self.messages.iter().find(|m| m.role == Role::System)
    }

    pub fn user_messages(&self) -> impl Iterator<Item = &ChatMessage> {
        self.messages.iter().filter(|m| m.role == Role::User)
    }

    pub fn estimated_tokens(&self) -> usize {
        self.messages
            .iter()
            .map(|m| estimate_tokens(&m.content))
            .sum()
    }
}

/// The role-play system message.
pub fn role_preamble(config: &PromptConfig) -> ChatMessage {
    ChatMessage::system(config.persona_text())
}

#[derive(Serialize)]
struct HashInput<'a> {
    config: &'a PromptConfig,
    document_id: &'a str,
    exemplar_ids: Vec<&'a str>,
    purpose: BundlePurpose,
}

fn provenance_hash(
    config: &PromptConfig,
    document_id: &str,
    exemplars: &[Exemplar],
    purpose: BundlePurpose,
) -> String {
    let input = HashInput {
        config,
        document_id,
        exemplar_ids: exemplars.iter().map(|e| e.source_id.as_str()).collect(),
        purpose,
    };
    let bytes = crate::json::to_canonical_vec(&input).expect("hash input serializes");
    hex(&Sha256::digest(&bytes))
}

fn assemble(
    config: &PromptConfig,
    document_id: &str,
    exemplars: &[Exemplar],
    purpose: BundlePurpose,
    user_content: String,
) -> Result<PromptBundle, PromptError> {
    let mut messages = Vec::with_capacity(2);
    if config.use_role_play() {
        messages.push(role_preamble(config));
    }
    messages.push(ChatMessage::user(user_content));
    let bundle = PromptBundle {
        messages,
        mode: config.mode(),
        purpose,
        provenance_hash: provenance_hash(config, document_id, exemplars, purpose),
    };
    let estimated = bundle.estimated_tokens();
    if estimated > config.context_budget() {
        return Err(PromptError::DocumentTooLarge {
            estimated,
            budget: config.context_budget(),
        });
    }
    Ok(bundle)
}

fn expect_mode(config: &PromptConfig, mode: PromptMode) -> Result<(), PromptError> {
    if config.mode() == mode {
        Ok(())
    } else {
        Err(PromptError::InvalidConfig(format!(
            "{} prompt requested for a {} configuration",
            mode,
            config.mode()
        )))
    }
}

fn expect_shots(config: &PromptConfig, exemplars: &[Exemplar]) -> Result<(), PromptError> {
    if exemplars.len() == config.shot_count() {
        Ok(())
    } else {
        Err(PromptError::InvalidConfig(format!(
            "configuration asks for {} exemplars, {} supplied",
            config.shot_count(),
            exemplars.len()
        )))
    }
}

fn exemplar_section(templates: &Templates, blocks: &[String]) -> String {
    if blocks.is_empty() {
        return String::new();
    }
    render_template(
        templates.get("exemplars"),
        &[("exemplar_blocks", &blocks.join("\n\n"))],
    )
}

fn dimension_item(templates: &Templates, d: Dimension) -> String {
    render_template(
        templates.get("dimension_item"),
        &[
            ("dimension_name", d.name()),
            ("definition", d.definition()),
            ("aspects", d.aspects()),
        ],
    )
}

/// The single-call prompt: rubric instructions for both stages, exemplar
/// blocks, then the thesis text.
pub fn build_composite_prompt(
    doc: &ReconstructedDocument,
    config: &PromptConfig,
    exemplars: &[Exemplar],
    templates: &Templates,
) -> Result<PromptBundle, PromptError> {
    expect_mode(config, PromptMode::Composite)?;
    expect_shots(config, exemplars)?;
    let dimensions: Vec<String> = Dimension::ALL
        .into_iter()
        .map(|d| dimension_item(templates, d).trim_end().to_string())
        .collect();
    let blocks: Vec<String> = exemplars.iter().map(Exemplar::block).collect();
    let content = render_template(
        templates.get("composite"),
        &[
            ("dimensions", &dimensions.join("\n")),
            ("reply_format", templates.get("reply_composite").trim_end()),
            ("exemplars", &exemplar_section(templates, &blocks)),
            ("document", &render_text(doc)),
        ],
    );
    assemble(
        config,
        &doc.source_id,
        exemplars,
        BundlePurpose::Composite,
        content,
    )
}

/// Builds the feedback request once the six staged results are in.
#[derive(Debug, Clone)]
pub struct SynthesisBuilder {
    config: PromptConfig,
    document_id: String,
    exemplars: Vec<Exemplar>,
    templates: Templates,
}

impl SynthesisBuilder {
    /// `assessments` must hold one entry per dimension; order does not matter.
    pub fn build(&self, assessments: &[DimensionAssessment]) -> Result<PromptBundle, PromptError> {
        let mut listed = Vec::with_capacity(6);
        for d in Dimension::ALL {
            let a = assessments
                .iter()
                .find(|a| a.dimension == d)
                .ok_or_else(|| PromptError::InvalidConfig(format!("no staged result for {d}")))?;
            listed.push(format!(
                "{} ({}): {}",
                d.name(),
                score_text(a.score),
                a.justification
            ));
        }
        let content = render_template(
            self.templates.get("synthesis"),
            &[
                ("assessments", &listed.join("\n")),
                (
                    "reply_format",
                    self.templates.get("reply_feedback").trim_end(),
                ),
            ],
        );
        assemble(
            &self.config,
            &self.document_id,
            &self.exemplars,
            BundlePurpose::Synthesis,
            content,
        )
    }
}

/// Per-dimension bundles plus the builder for the synthesis call.
#[derive(Debug, Clone)]
pub struct StagedPrompts {
    /// One bundle per dimension, in [`Dimension::ALL`] order.
    pub dimensions: Vec<(Dimension, PromptBundle)>,
    pub synthesis: SynthesisBuilder,
}

/// Staged prompts: each dimension evaluated in its own call, followed by a
/// synthesis call that asks only for feedback.
pub fn build_stage_prompts(
    doc: &ReconstructedDocument,
    config: &PromptConfig,
    exemplars: &[Exemplar],
    templates: &Templates,
) -> Result<StagedPrompts, PromptError> {
    expect_mode(config, PromptMode::Staged)?;
    expect_shots(config, exemplars)?;
    let document = render_text(doc);
    let mut dimensions = Vec::with_capacity(6);
    for d in Dimension::ALL {
        let blocks: Vec<String> = exemplars.iter().map(|e| e.block_for(d)).collect();
        let reply = render_template(
            templates.get("reply_dimension"),
            &[("dimension_key", d.key())],
        );
        let content = render_template(
            templates.get("staged"),
            &[
                ("dimension_name", d.name()),
                ("definition", d.definition()),
                ("aspects", d.aspects()),
                ("reply_format", reply.trim_end()),
                ("exemplars", &exemplar_section(templates, &blocks)),
                ("document", &document),
            ],
        );
        dimensions.push((
            d,
            assemble(
                config,
                &doc.source_id,
                exemplars,
                BundlePurpose::Dimension(d),
                content,
            )?,
        ));
    }
    Ok(StagedPrompts {
        dimensions,
        synthesis: SynthesisBuilder {
            config: config.clone(),
            document_id: doc.source_id.clone(),
            exemplars: exemplars.to_vec(),
            templates: templates.clone(),
        },
    })
}

/// The baseline: one holistic instruction, the reply stanza and the thesis.
pub fn build_standard_prompt(
    doc: &ReconstructedDocument,
    config: &PromptConfig,
    templates: &Templates,
) -> Result<PromptBundle, PromptError> {
    expect_mode(config, PromptMode::Standard)?;
    let content = render_template(
        templates.get("standard"),
        &[
            ("reply_format", templates.get("reply_standard").trim_end()),
            ("document", &render_text(doc)),
        ],
    );
    assemble(
        config,
        &doc.source_id,
        &[],
        BundlePurpose::Standard,
        content,
    )
}

/// The exemplar-block count of a bundle, counted from its user content.
pub fn count_exemplar_blocks(bundle: &PromptBundle) -> usize {
    bundle
        .user_messages()
        .map(|m| m.content.matches("<exemplar id=").count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reconstruct::{Block, DocumentStats, Paragraph, Section, SectionLabel};
    use alloc::vec;

    fn doc(text: &str) -> ReconstructedDocument {
        ReconstructedDocument {
            source_id: "t-001".into(),
            title: "A Thesis".into(),
            sections: vec![Section {
                label: SectionLabel::Abstract,
                heading_text: "Abstract".into(),
                blocks: vec![Block::Paragraph(Paragraph { text: text.into() })],
            }],
            stats: DocumentStats::default(),
        }
    }

    fn pool() -> Vec<Exemplar> {
        ["p1", "p2", "p3"]
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let v = 7.0 + i as f64;
                format_exemplar(&DatasetRecord::from_values(*id, "", [v; 6], v).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn default_persona_preamble() {
        let m = role_preamble(&PromptConfig::full());
        assert_eq!(m.role, Role::System);
        assert_eq!(
            m.content,
            "You are a university professor responsible for evaluating students' submitted undergraduate thesis."
        );
        let custom = PromptConfig::full()
            .with_persona("You are an examiner.")
            .unwrap();
        assert_eq!(role_preamble(&custom).content, "You are an examiner.");
        assert!(PromptConfig::full().with_persona("  ").is_err());
    }

    #[test]
    fn role_off_has_no_system_message() {
        let config = PromptConfig::new(PromptMode::Composite, false, 0).unwrap();
        let b = build_composite_prompt(&doc("Body."), &config, &[], &Templates::default()).unwrap();
        assert!(b.system_message().is_none());
        assert_eq!(b.messages.len(), 1);
        assert_eq!(count_exemplar_blocks(&b), 0);
        assert!(!b.messages[0].content.contains("Completed assessments"));
    }

    #[test]
    fn exemplar_format_all_eights() {
        let r = DatasetRecord::from_values("p", "", [8.0; 6], 8.0).unwrap();
        let e = format_exemplar(&r).unwrap();
        let lines: Vec<&str> = e.formatted_text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines.iter().all(|l| l.ends_with(": 8.0")));
        assert_eq!(lines[6], "Holistic: 8.0");
        for d in Dimension::ALL {
            assert!(e.formatted_text.contains(d.name()));
        }
    }

    #[test]
    fn exemplar_missing_rigor() {
        let mut scores = [Score::new(8.0).ok(); 7];
        scores[Dimension::Rigor.index()] = None;
        let r = DatasetRecord::partial("p", "", scores);
        assert_eq!(
            format_exemplar(&r),
            Err(PromptError::MissingScore {
                id: "p".into(),
                target: Target::Dimension(Dimension::Rigor)
            })
        );
    }

    #[test]
    fn exemplar_keeps_stored_holistic() {
        // stored holistic 8.39 differs from any weighted recomputation of these means
        let r = DatasetRecord::from_values("p", "", [8.20, 8.31, 8.36, 8.15, 9.05, 8.83], 8.39)
            .unwrap();
        let e = format_exemplar(&r).unwrap();
        assert!(e.formatted_text.ends_with("Holistic: 8.39"));
        assert!(e.formatted_text.contains("Writing: 8.15"));
    }

    #[test]
    fn selection_forced_and_empty() {
        let pool = pool();
        for seed in 0..20 {
            let picked = select_exemplars(&pool, 2, seed, Some("p2")).unwrap();
            let ids: Vec<&str> = picked.iter().map(|e| e.source_id.as_str()).collect();
            assert_eq!(ids, ["p1", "p3"]);
        }
        assert!(select_exemplars(&pool, 0, 1, None).unwrap().is_empty());
        assert_eq!(
            select_exemplars(&pool, 3, 1, Some("p1")),
            Err(PromptError::PoolTooSmall {
                requested: 3,
                available: 2
            })
        );
    }

    #[test]
    fn selection_is_seed_deterministic() {
        let pool = pool();
        let pairs = [["p1", "p2"], ["p1", "p3"], ["p2", "p3"]];
        let first = select_exemplars(&pool, 2, 42, None).unwrap();
        let ids: Vec<&str> = first.iter().map(|e| e.source_id.as_str()).collect();
        assert!(pairs.iter().any(|p| p[..] == ids[..]));
        for _ in 0..5 {
            assert_eq!(select_exemplars(&pool, 2, 42, None).unwrap(), first);
        }
        // over many seeds every pair shows up
        let mut seen = BTreeSetLite::default();
        for seed in 0..64 {
            let p = select_exemplars(&pool, 2, seed, None).unwrap();
            seen.insert(format!("{}{}", p[0].source_id, p[1].source_id));
        }
        assert_eq!(seen.0.len(), 3);
    }

    #[derive(Default)]
    struct BTreeSetLite(alloc::collections::BTreeSet<String>);
    impl BTreeSetLite {
        fn insert(&mut self, s: String) {
            self.0.insert(s);
        }
    }

    #[test]
    fn composite_with_shots_and_role() {
        let config = PromptConfig::full();
        let ex = select_exemplars(&pool(), 2, 7, None).unwrap();
        let b = build_composite_prompt(
            &doc("The thesis body."),
            &config,
            &ex,
            &Templates::default(),
        )
        .unwrap();
        assert_eq!(b.messages.len(), 2);
        assert_eq!(b.messages[0].role, Role::System);
        let user = &b.messages[1].content;
        assert_eq!(count_exemplar_blocks(&b), 2);
        let thesis_at = user.find("The thesis body.").unwrap();
        let last_exemplar = user.rfind("</exemplar>").unwrap();
        let stage_one = user.find("Stage 1").unwrap();
        assert!(stage_one < last_exemplar && last_exemplar < thesis_at);
        for d in Dimension::ALL {
            assert!(user.contains(d.aspects()));
        }
    }

    #[test]
    fn composite_budget() {
        let config = PromptConfig::new(PromptMode::Composite, false, 0)
            .unwrap()
            .with_context_budget(1000)
            .unwrap();
        let big = "word ".repeat(2000);
        assert!(matches!(
            build_composite_prompt(&doc(big.trim()), &config, &[], &Templates::default()),
            Err(PromptError::DocumentTooLarge { budget: 1000, .. })
        ));
    }

    #[test]
    fn shot_mismatch_is_rejected() {
        let config = PromptConfig::full();
        assert!(matches!(
            build_composite_prompt(&doc("x"), &config, &[], &Templates::default()),
            Err(PromptError::InvalidConfig(_))
        ));
    }

    #[test]
    fn staged_bundles_name_one_dimension() {
        let config = PromptConfig::new(PromptMode::Staged, true, 2).unwrap();
        let ex = select_exemplars(&pool(), 2, 1, None).unwrap();
        let staged =
            build_stage_prompts(&doc("Body text."), &config, &ex, &Templates::default()).unwrap();
        assert_eq!(staged.dimensions.len(), 6);
        for (d, bundle) in &staged.dimensions {
            assert!(bundle.system_message().is_some());
            let user: String = bundle.user_messages().map(|m| m.content.clone()).collect();
            let lower = user.to_lowercase();
            for other in Dimension::ALL {
                let named = lower
                    .split(|c: char| !c.is_alphanumeric())
                    .any(|w| w == other.key());
                assert_eq!(named, other == *d, "{d} bundle vs {other}");
            }
            assert_eq!(count_exemplar_blocks(bundle), 2);
        }
        let assessments: Vec<DimensionAssessment> = Dimension::ALL
            .into_iter()
            .map(|d| DimensionAssessment {
                dimension: d,
                score: Score::new(7.5).unwrap(),
                justification: format!("because of {}", d.key()),
            })
            .collect();
        let synth = staged.synthesis.build(&assessments).unwrap();
        assert!(synth.system_message().is_some());
        let user = &synth.user_messages().next().unwrap().content;
        for d in Dimension::ALL {
            assert!(user.contains(&format!("{} (7.5): because of {}", d.name(), d.key())));
        }
        assert!(staged.synthesis.build(&assessments[..5]).is_err());
    }

    #[test]
    fn standard_prompt() {
        let b = build_standard_prompt(
            &doc("Body."),
            &PromptConfig::standard(),
            &Templates::default(),
        )
        .unwrap();
        assert!(b.messages[0]
            .content
            .contains("Holistically assess the given thesis on a 1–10 scale"));
        assert!(b.system_message().is_none());
        assert_eq!(count_exemplar_blocks(&b), 0);
        assert!(PromptConfig::new(PromptMode::Standard, false, 2).is_err());
        let empty = ReconstructedDocument {
            sections: vec![],
            title: String::new(),
            ..doc("")
        };
        assert!(
            build_standard_prompt(&empty, &PromptConfig::standard(), &Templates::default()).is_ok()
        );
    }

    #[test]
    fn bundles_are_hash_stable() {
        let config = PromptConfig::full().with_seed(9);
        let ex = select_exemplars(&pool(), 2, 3, None).unwrap();
        let a = build_composite_prompt(&doc("x"), &config, &ex, &Templates::default()).unwrap();
        let b = build_composite_prompt(&doc("x"), &config, &ex, &Templates::default()).unwrap();
        assert_eq!(a, b);
        let other = build_composite_prompt(
            &doc("x"),
            &config.clone().with_seed(10),
            &ex,
            &Templates::default(),
        )
        .unwrap();
        assert_ne!(a.provenance_hash, other.provenance_hash);
    }

    #[test]
    fn template_rendering_is_single_pass() {
        let out = render_template(
            "A {{x}} B {{y}} C {{unknown}} {{",
            &[("x", "{{y}}"), ("y", "Y")],
        );
        assert_eq!(out, "A {{y}} B Y C {{unknown}} {{");
    }

    #[test]
    fn template_hash_changes_with_text() {
        let mut t = Templates::default();
        let before = t.hash();
        assert!(t.set("standard", "Grade it."));
        assert!(!t.set("nope", "x"));
        assert_ne!(before, t.hash());
        assert_eq!(t.get("standard"), "Grade it.");
    }

    #[test]
    fn config_serde_validates() {
        let c = PromptConfig::full();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PromptConfig>(&text).unwrap(), c);
        let bad = text.replace("\"composite\"", "\"standard\"");
        assert!(serde_json::from_str::<PromptConfig>(&bad).is_err());
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("摘要摘要"), 1);
    }
}
