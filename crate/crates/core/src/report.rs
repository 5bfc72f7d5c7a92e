//! Reply parsing, holistic aggregation and report rendering.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::prompting::{PromptConfig, PromptMode};
use crate::rubric::{Dimension, DimensionScores, Score, WeightProfile, SCORE_MAX, SCORE_MIN};

/// Current report JSON schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Allowed drift between the stored holistic and a recomputation.
pub const HOLISTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionAssessment {
    pub dimension: Dimension,
    pub score: Score,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("reply contains no parseable fenced JSON block")]
    NoStructuredBlock,
    #[error("reply has no entry for {0}")]
    MissingDimension(Dimension),
    #[error("{name} score {value} is outside [0, 10]")]
    ScoreOutOfRange { name: String, value: f64 },
    #[error("reply has more than one entry for {0}")]
    DuplicateDimension(Dimension),
    #[error("{0} justification is empty")]
    EmptyJustification(Dimension),
    #[error("malformed entry {name}: {reason}")]
    MalformedEntry { name: String, reason: String },
    #[error("reply has no holistic score")]
    MissingHolistic,
    #[error("reply has no feedback")]
    MissingFeedback,
    #[error("report violates its schema: {0}")]
    SchemaViolation(String),
}

impl ReportError {
    pub fn name(&self) -> &'static str {
        match self {
            ReportError::NoStructuredBlock => "NoStructuredBlock",
            ReportError::MissingDimension(_) => "MissingDimension",
            ReportError::ScoreOutOfRange { .. } => "ScoreOutOfRange",
            ReportError::DuplicateDimension(_) => "DuplicateDimension",
            ReportError::EmptyJustification(_) => "EmptyJustification",
            ReportError::MalformedEntry { .. } => "MalformedEntry",
            ReportError::MissingHolistic => "MissingHolistic",
            ReportError::MissingFeedback => "MissingFeedback",
            ReportError::SchemaViolation(_) => "SchemaViolation",
        }
    }
}

/// A JSON object with its entries kept in order, duplicates included.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (e.g. "json") up to the end of the line
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    blocks
}

/// Finds the machine-readable object in a reply: the first fenced block that
/// parses as a JSON object, or failing that a bare object spanning the first
/// `{` to the last `}`.
fn structured_block(text: &str) -> Result<Vec<(String, Value)>, ReportError> {
    for block in fenced_blocks(text) {
        if let Ok(Entries(entries)) = serde_json::from_str::<Entries>(block.trim()) {
            return Ok(entries);
        }
    }
    if let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) {
        if start < end {
            if let Ok(Entries(entries)) = serde_json::from_str::<Entries>(&text[start..=end]) {
                return Ok(entries);
            }
        }
    }
    Err(ReportError::NoStructuredBlock)
}

fn number(name: &str, v: &Value) -> Result<f64, ReportError> {
    let value = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    value.ok_or_else(|| ReportError::MalformedEntry {
        name: name.to_string(),
        reason: "score is not a number".into(),
    })
}

fn score(name: &str, v: &Value) -> Result<Score, ReportError> {
    let value = number(name, v)?;
    Score::new(value).map_err(|_| ReportError::ScoreOutOfRange {
        name: name.to_string(),
        value,
    })
}

fn assessment(d: Dimension, v: &Value) -> Result<DimensionAssessment, ReportError> {
    let name = d.name();
    let obj = v.as_object().ok_or_else(|| ReportError::MalformedEntry {
        name: name.to_string(),
        reason: "expected an object with score and justification".into(),
    })?;
    let raw_score = obj
        .get("score")
        .ok_or_else(|| ReportError::MalformedEntry {
            name: name.to_string(),
            reason: "no score".into(),
        })?;
    let score = score(name, raw_score)?;
    let justification = match obj.get("justification") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Null) | None => String::new(),
        Some(_) => {
            return Err(ReportError::MalformedEntry {
                name: name.to_string(),
                reason: "justification is not a string".into(),
            })
        }
    };
    if justification.is_empty() {
        return Err(ReportError::EmptyJustification(d));
    }
    Ok(DimensionAssessment {
        dimension: d,
        score,
        justification,
    })
}

fn key_is(key: &str, wanted: &str) -> bool {
    key.trim().eq_ignore_ascii_case(wanted)
}

fn feedback_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        _ => None,
    }
}

/// The content of a validated reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    /// Six entries in rubric order; empty for standard-mode replies.
    pub assessments: Vec<DimensionAssessment>,
    pub stated_holistic: Option<Score>,
    pub feedback: Option<String>,
}

/// Parses a model reply.
///
/// Composite and staged-synthesis replies need all six dimensions; standard
/// replies need only `holistic`.
pub fn parse_reply(text: &str, mode: PromptMode) -> Result<ParsedReply, ReportError> {
    let entries = structured_block(text)?;
    let mut slots: [Option<DimensionAssessment>; 6] = Default::default();
    let mut stated_holistic = None;
    let mut feedback = None;
    let mut seen_holistic = false;
    for (key, value) in &entries {
        if let (true, Some(d)) = (mode.is_hierarchical(), Dimension::from_name(key.trim())) {
            if slots[d.index()].is_some() {
                return Err(ReportError::DuplicateDimension(d));
            }
            slots[d.index()] = Some(assessment(d, value)?);
        } else if key_is(key, "holistic") {
            if seen_holistic {
                return Err(ReportError::MalformedEntry {
                    name: "holistic".into(),
                    reason: "duplicate key".into(),
                });
            }
            seen_holistic = true;
            if !value.is_null() {
                stated_holistic = Some(score("holistic", value)?);
            }
        } else if key_is(key, "feedback") {
            feedback = feedback_text(value);
        }
    }
    if !mode.is_hierarchical() {
        let holistic = stated_holistic.ok_or(ReportError::MissingHolistic)?;
        return Ok(ParsedReply {
            assessments: Vec::new(),
            stated_holistic: Some(holistic),
            feedback,
        });
    }
    let mut assessments = Vec::with_capacity(6);
    for (d, slot) in Dimension::ALL.into_iter().zip(slots) {
        assessments.push(slot.ok_or(ReportError::MissingDimension(d))?);
    }
    Ok(ParsedReply {
        assessments,
        stated_holistic,
        feedback,
    })
}

/// Parses the reply to one staged dimension call.
pub fn parse_dimension_reply(
    text: &str,
    dimension: Dimension,
) -> Result<DimensionAssessment, ReportError> {
    let entries = structured_block(text)?;
    let mut found = None;
    for (key, value) in &entries {
        if Dimension::from_name(key.trim()) == Some(dimension) {
            if found.is_some() {
                return Err(ReportError::DuplicateDimension(dimension));
            }
            found = Some(assessment(dimension, value)?);
        }
    }
    found.ok_or(ReportError::MissingDimension(dimension))
}

/// Parses the reply to a synthesis call.
pub fn parse_feedback_reply(text: &str) -> Result<String, ReportError> {
    let entries = structured_block(text)?;
    entries
        .iter()
        .find(|(k, _)| key_is(k, "feedback"))
        .and_then(|(_, v)| feedback_text(v))
        .ok_or(ReportError::MissingFeedback)
}

fn weighted_sum(scores: &DimensionScores, profile: &WeightProfile) -> f64 {
    scores
        .iter()
        .map(|(d, s)| profile.weight(d) * s.value())
        .sum()
}

/// Weighted sum of the six scores.
///
/// Mathematically the sum already lies between the smallest and largest
/// score; the clamp only absorbs floating-point rounding at the edges.
pub fn aggregate_holistic(scores: &DimensionScores, profile: &WeightProfile) -> Score {
    let values = scores.values();
    let lo = values.iter().copied().fold(SCORE_MAX, f64::min);
    let hi = values.iter().copied().fold(SCORE_MIN, f64::max);
    let sum = weighted_sum(scores, profile).clamp(lo, hi);
    Score::new(sum).expect("weighted mean of valid scores is a valid score")
}

/// Seeds used for one assessment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub run_seed: u64,
    pub exemplar_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportProvenance {
    pub model_id: String,
    pub mode: PromptMode,
    pub shot_count: usize,
    pub role_play: bool,
    pub weight_profile: WeightProfile,
    pub seeds: Seeds,
    pub template_hash: String,
    pub temperature: f64,
    pub exemplar_ids: Vec<String>,
    /// Provenance hashes of every bundle sent, in call order.
    pub prompt_hashes: Vec<String>,
    /// |stated − computed| when the model also gave a holistic score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holistic_discrepancy: Option<f64>,
    /// Number of re-asks after unparseable replies.
    #[serde(default)]
    pub reasks: u32,
}

impl ReportProvenance {
    pub fn from_config(
        config: &PromptConfig,
        model_id: impl Into<String>,
        template_hash: impl Into<String>,
    ) -> Self {
        ReportProvenance {
            model_id: model_id.into(),
            mode: config.mode(),
            shot_count: config.shot_count(),
            role_play: config.use_role_play(),
            weight_profile: *config.weight_profile(),
            seeds: Seeds {
                run_seed: config.random_seed(),
                exemplar_seed: 0,
            },
            template_hash: template_hash.into(),
            temperature: 0.0,
            exemplar_ids: Vec::new(),
            prompt_hashes: Vec::new(),
            holistic_discrepancy: None,
            reasks: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentReport {
    pub schema_version: u32,
    pub source_id: String,
    /// Exactly one entry per dimension, in rubric order.
    pub dimensions: Vec<DimensionAssessment>,
    pub holistic: Score,
    pub feedback: String,
    pub provenance: ReportProvenance,
}

impl AssessmentReport {
    pub fn dimension_scores(&self) -> DimensionScores {
        let mut scores = [Score::new(0.0).expect("zero is in range"); 6];
        for a in &self.dimensions {
            scores[a.dimension.index()] = a.score;
        }
        DimensionScores::new(scores)
    }

    pub fn assessment(&self, d: Dimension) -> Option<&DimensionAssessment> {
        self.dimensions.iter().find(|a| a.dimension == d)
    }

    /// Checks the schema version, the dimension set and the holistic sum.
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ReportError::SchemaViolation(format!(
                "schema_version {}",
                self.schema_version
            )));
        }
        if self.dimensions.len() != 6 {
            return Err(ReportError::SchemaViolation(format!(
                "{} dimension entries, expected 6",
                self.dimensions.len()
            )));
        }
        for (d, a) in Dimension::ALL.into_iter().zip(&self.dimensions) {
            if a.dimension != d {
                return Err(ReportError::SchemaViolation(format!(
                    "expected {d}, found {}",
                    a.dimension
                )));
            }
            if a.justification.trim().is_empty() {
                return Err(ReportError::EmptyJustification(d));
            }
        }
        let expected = weighted_sum(&self.dimension_scores(), &self.provenance.weight_profile);
        if (expected - self.holistic.value()).abs() > HOLISTIC_TOLERANCE {
            return Err(ReportError::SchemaViolation(format!(
                "holistic {} differs from weighted sum {expected}",
                self.holistic.value()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_canonical_vec(self).expect("report serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ReportError> {
        let report: AssessmentReport = serde_json::from_slice(bytes)
            .map_err(|e| ReportError::SchemaViolation(e.to_string()))?;
        report.validate()?;
        Ok(report)
    }
}

/// Builds the final report. The weighted sum is authoritative; a stated
/// holistic only contributes the recorded discrepancy.
pub fn finalize_report(
    source_id: impl Into<String>,
    parsed: ParsedReply,
    mut provenance: ReportProvenance,
) -> Result<AssessmentReport, ReportError> {
    if parsed.assessments.is_empty() {
        return Err(ReportError::MissingDimension(Dimension::ALL[0]));
    }
    let mut slots: [Option<DimensionAssessment>; 6] = Default::default();
    for a in parsed.assessments {
        let i = a.dimension.index();
        if slots[i].is_some() {
            return Err(ReportError::DuplicateDimension(a.dimension));
        }
        if a.justification.trim().is_empty() {
            return Err(ReportError::EmptyJustification(a.dimension));
        }
        slots[i] = Some(a);
    }
    let mut dimensions = Vec::with_capacity(6);
    for (d, slot) in Dimension::ALL.into_iter().zip(slots) {
        dimensions.push(slot.ok_or(ReportError::MissingDimension(d))?);
    }
    let mut report = AssessmentReport {
        schema_version: SCHEMA_VERSION,
        source_id: source_id.into(),
        dimensions,
        holistic: Score::new(0.0).expect("zero is in range"),
        feedback: parsed.feedback.unwrap_or_default(),
        provenance: ReportProvenance {
            holistic_discrepancy: None,
            ..provenance.clone()
        },
    };
    let holistic = aggregate_holistic(&report.dimension_scores(), &provenance.weight_profile);
    provenance.holistic_discrepancy = parsed
        .stated_holistic
        .map(|s| (s.value() - holistic.value()).abs());
    report.holistic = holistic;
    report.provenance = provenance;
    Ok(report)
}

/// A standard-mode result: one holistic score, no rubric breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolisticOnlyResult {
    pub schema_version: u32,
    pub source_id: String,
    pub holistic: Score,
    pub provenance: ReportProvenance,
}

impl HolisticOnlyResult {
    pub fn from_parsed(
        source_id: impl Into<String>,
        parsed: &ParsedReply,
        provenance: ReportProvenance,
    ) -> Result<Self, ReportError> {
        Ok(HolisticOnlyResult {
            schema_version: SCHEMA_VERSION,
            source_id: source_id.into(),
            holistic: parsed.stated_holistic.ok_or(ReportError::MissingHolistic)?,
            provenance,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::json::to_canonical_vec(self).expect("result serialization is infallible")
    }
}

/// Either kind of per-thesis output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Assessment {
    Report(AssessmentReport),
    HolisticOnly(HolisticOnlyResult),
}

impl Assessment {
    pub fn source_id(&self) -> &str {
        match self {
            Assessment::Report(r) => &r.source_id,
            Assessment::HolisticOnly(h) => &h.source_id,
        }
    }

    pub fn holistic(&self) -> Score {
        match self {
            Assessment::Report(r) => r.holistic,
            Assessment::HolisticOnly(h) => h.holistic,
        }
    }

    pub fn dimension_score(&self, d: Dimension) -> Option<Score> {
        match self {
            Assessment::Report(r) => r.assessment(d).map(|a| a.score),
            Assessment::HolisticOnly(_) => None,
        }
    }

    pub fn provenance(&self) -> &ReportProvenance {
        match self {
            Assessment::Report(r) => &r.provenance,
            Assessment::HolisticOnly(h) => &h.provenance,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        match self {
            Assessment::Report(r) => r.to_json(),
            Assessment::HolisticOnly(h) => h.to_json(),
        }
    }

    /// Parses and validates either kind.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ReportError> {
        let value: Assessment = serde_json::from_slice(bytes)
            .map_err(|e| ReportError::SchemaViolation(e.to_string()))?;
        if let Assessment::Report(r) = &value {
            r.validate()?;
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Json,
    Markdown,
}

impl RenderFormat {
    pub fn parse(s: &str) -> Option<RenderFormat> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Some(RenderFormat::Json),
            "markdown" | "md" => Some(RenderFormat::Markdown),
            _ => None,
        }
    }
}

pub fn render(report: &AssessmentReport, format: RenderFormat) -> Vec<u8> {
    match format {
        RenderFormat::Json => report.to_json(),
        RenderFormat::Markdown => render_markdown(report).into_bytes(),
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Markdown layout: title, holistic score, one subsection per dimension,
/// feedback, then a provenance list.
pub fn render_markdown(report: &AssessmentReport) -> String {
    let mut out = String::new();
    let p = &report.provenance;
    let _ = writeln!(out, "# Assessment: {}\n", report.source_id);
    let _ = writeln!(out, "**Holistic score: {}** / 10\n", report.holistic);
    let _ = writeln!(out, "## Dimension scores\n");
    for a in &report.dimensions {
        let _ = writeln!(out, "### {} ({})\n", a.dimension.name(), a.score);
        let _ = writeln!(out, "{}\n", one_line(&a.justification));
    }
    let _ = writeln!(out, "## Feedback\n");
    if report.feedback.trim().is_empty() {
        let _ = writeln!(out, "_No feedback returned._\n");
    } else {
        for para in report
            .feedback
            .split("\n\n")
            .map(str::trim)
            .filter(|p| !p.is_empty())
        {
            let _ = writeln!(out, "{}\n", one_line(para));
        }
    }
    let _ = writeln!(out, "## Provenance\n");
    let _ = writeln!(out, "- model: {}", p.model_id);
    let _ = writeln!(out, "- mode: {}", p.mode);
    let _ = writeln!(out, "- exemplars: {}", p.shot_count);
    let _ = writeln!(
        out,
        "- role play: {}",
        if p.role_play { "on" } else { "off" }
    );
    let weights: Vec<String> = p
        .weight_profile
        .values()
        .iter()
        .map(|w| format!("{w:.4}"))
        .collect();
    let _ = writeln!(out, "- weights (rubric order): {}", weights.join(", "));
    let _ = writeln!(out, "- run seed: {}", p.seeds.run_seed);
    let _ = writeln!(out, "- template hash: {}", p.template_hash);
    if let Some(d) = p.holistic_discrepancy {
        let _ = writeln!(out, "- stated holistic discrepancy: {d:.3}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WELL_FORMED: &str = "Here is my assessment.\n\n```json\n{\n  \"structure\": {\"score\": 8.2, \"justification\": \"Chapters follow a clear arc.\"},\n  \"logic\": {\"score\": 8.31, \"justification\": \"Claims follow from the data.\"},\n  \"originality\": {\"score\": 8.36, \"justification\": \"New angle on an old problem.\"},\n  \"writing\": {\"score\": 8.15, \"justification\": \"Mostly fluent prose.\"},\n  \"proficiency\": {\"score\": 9.05, \"justification\": \"Sound command of methods.\"},\n  \"rigor\": {\"score\": 8.83, \"justification\": \"Careful experiments.\"},\n  \"holistic\": 8.0,\n  \"feedback\": \"Tighten the discussion chapter.\"\n}\n```\n";

    fn provenance(profile: WeightProfile) -> ReportProvenance {
        ReportProvenance::from_config(&PromptConfig::full().with_weights(profile), "mock", "abc")
    }

    #[test]
    fn parses_six_entries() {
        let p = parse_reply(WELL_FORMED, PromptMode::Composite).unwrap();
        assert_eq!(p.assessments.len(), 6);
        assert_eq!(p.assessments[3].dimension, Dimension::Writing);
        assert_eq!(p.assessments[3].score.value(), 8.15);
        assert_eq!(p.stated_holistic.unwrap().value(), 8.0);
        assert_eq!(
            p.feedback.as_deref(),
            Some("Tighten the discussion chapter.")
        );
    }

    #[test]
    fn missing_writing() {
        let text = WELL_FORMED.replace("\"writing\"", "\"wrting\"");
        assert_eq!(
            parse_reply(&text, PromptMode::Composite),
            Err(ReportError::MissingDimension(Dimension::Writing))
        );
    }

    #[test]
    fn out_of_range_structure() {
        let text = WELL_FORMED.replace("\"score\": 8.2,", "\"score\": 11,");
        assert_eq!(
            parse_reply(&text, PromptMode::Composite),
            Err(ReportError::ScoreOutOfRange {
                name: "Structure".into(),
                value: 11.0
            })
        );
    }

    #[test]
    fn duplicate_key_detected() {
        let text = WELL_FORMED.replace(
            "\"holistic\": 8.0,",
            "\"Logic\": {\"score\": 5, \"justification\": \"again\"}, \"holistic\": 8.0,",
        );
        assert_eq!(
            parse_reply(&text, PromptMode::Composite),
            Err(ReportError::DuplicateDimension(Dimension::Logic))
        );
    }

    #[test]
    fn no_block() {
        assert_eq!(
            parse_reply("I think it is quite good overall.", PromptMode::Composite),
            Err(ReportError::NoStructuredBlock)
        );
        assert_eq!(
            parse_reply("```json\n{not json\n```", PromptMode::Composite),
            Err(ReportError::NoStructuredBlock)
        );
    }

    #[test]
    fn bare_object_fallback() {
        let bare = WELL_FORMED.replace("```json", "").replace("```", "");
        assert_eq!(
            parse_reply(&bare, PromptMode::Composite)
                .unwrap()
                .assessments
                .len(),
            6
        );
    }

    #[test]
    fn empty_justification() {
        let text = WELL_FORMED.replace("Careful experiments.", "  ");
        assert_eq!(
            parse_reply(&text, PromptMode::Composite),
            Err(ReportError::EmptyJustification(Dimension::Rigor))
        );
    }

    #[test]
    fn standard_reply() {
        let p = parse_reply("```json\n{\"holistic\": 7.5}\n```", PromptMode::Standard).unwrap();
        assert!(p.assessments.is_empty());
        assert_eq!(p.stated_holistic.unwrap().value(), 7.5);
        assert_eq!(
            parse_reply("```json\n{}\n```", PromptMode::Standard),
            Err(ReportError::MissingHolistic)
        );
        assert!(matches!(
            finalize_report("t", p.clone(), provenance(WeightProfile::uniform())),
            Err(ReportError::MissingDimension(_))
        ));
        let h =
            HolisticOnlyResult::from_parsed("t", &p, provenance(WeightProfile::uniform())).unwrap();
        assert_eq!(h.holistic.value(), 7.5);
    }

    #[test]
    fn dimension_and_feedback_replies() {
        let a = parse_dimension_reply(
            "```json\n{\"rigor\": {\"score\": 6.5, \"justification\": \"Thin evaluation.\"}}\n```",
            Dimension::Rigor,
        )
        .unwrap();
        assert_eq!(a.score.value(), 6.5);
        assert_eq!(
            parse_dimension_reply(
                "```json\n{\"logic\": {\"score\": 6.5, \"justification\": \"x\"}}\n```",
                Dimension::Rigor
            ),
            Err(ReportError::MissingDimension(Dimension::Rigor))
        );
        assert_eq!(
            parse_feedback_reply("```json\n{\"feedback\": \" Do more. \"}\n```").unwrap(),
            "Do more."
        );
        assert_eq!(
            parse_feedback_reply("```json\n{\"feedback\": \"\"}\n```"),
            Err(ReportError::MissingFeedback)
        );
        // a universal block with every key also satisfies the per-call parsers
        assert_eq!(
            parse_dimension_reply(WELL_FORMED, Dimension::Proficiency)
                .unwrap()
                .score
                .value(),
            9.05
        );
        assert!(parse_feedback_reply(WELL_FORMED).is_ok());
    }

    #[test]
    fn aggregate_examples() {
        let eights = DimensionScores::from_values([8.0; 6]).unwrap();
        assert_eq!(
            aggregate_holistic(&eights, &WeightProfile::uniform()).value(),
            8.0
        );
        let zeros = DimensionScores::from_values([0.0; 6]).unwrap();
        assert_eq!(
            aggregate_holistic(&zeros, &WeightProfile::uniform()).value(),
            0.0
        );
        let means = DimensionScores::from_values([8.20, 8.31, 8.36, 8.15, 9.05, 8.83]).unwrap();
        // 0.2*(8.20+8.31+8.36+8.15) + 0.1*(9.05+8.83) = 6.604 + 1.788
        let oracle = 0.2 * 33.02 + 0.1 * 17.88;
        let h = aggregate_holistic(&means, &WeightProfile::core_weighted()).value();
        assert!((h - oracle).abs() < 1e-9 && (h - 8.392).abs() < 1e-9);
    }

    #[test]
    fn finalize_records_discrepancy() {
        let parsed = parse_reply(WELL_FORMED, PromptMode::Composite).unwrap();
        let r = finalize_report(
            "t-1",
            parsed.clone(),
            provenance(WeightProfile::core_weighted()),
        )
        .unwrap();
        assert!((r.holistic.value() - 8.392).abs() < 1e-9);
        assert!((r.provenance.holistic_discrepancy.unwrap() - 0.392).abs() < 1e-9);
        r.validate().unwrap();
        let without = ParsedReply {
            stated_holistic: None,
            ..parsed
        };
        let r2 =
            finalize_report("t-1", without, provenance(WeightProfile::core_weighted())).unwrap();
        assert_eq!(r2.provenance.holistic_discrepancy, None);
    }

    #[test]
    fn json_round_trip_and_markdown() {
        let parsed = parse_reply(WELL_FORMED, PromptMode::Composite).unwrap();
        let r = finalize_report("t-1", parsed, provenance(WeightProfile::uniform())).unwrap();
        let bytes = render(&r, RenderFormat::Json);
        assert_eq!(AssessmentReport::from_json(&bytes).unwrap(), r);
        assert_eq!(
            Assessment::from_json(&bytes).unwrap(),
            Assessment::Report(r.clone())
        );
        let md = String::from_utf8(render(&r, RenderFormat::Markdown)).unwrap();
        for d in Dimension::ALL {
            assert_eq!(md.matches(d.name()).count(), 1, "{d}");
        }
        assert!(md.contains("**Holistic score: 8.5** / 10"));
        let mut tampered = r.clone();
        tampered.holistic = Score::new(9.0).unwrap();
        assert!(AssessmentReport::from_json(&tampered.to_json()).is_err());
    }

    fn scores() -> impl Strategy<Value = [f64; 6]> {
        prop::array::uniform6(0.0f64..=10.0)
    }

    fn profiles() -> impl Strategy<Value = WeightProfile> {
        prop::array::uniform6(0.01f64..1.0).prop_map(|raw| {
            let total: f64 = raw.iter().sum();
            WeightProfile::from_values(raw.map(|w| w / total)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn holistic_within_bounds(s in scores(), p in profiles()) {
            let h = aggregate_holistic(&DimensionScores::from_values(s).unwrap(), &p).value();
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= h && h <= hi);
        }

        #[test]
        fn holistic_is_linear(s in prop::array::uniform6(0.0f64..=5.0), c in 0.1f64..2.0, p in profiles()) {
            let h = aggregate_holistic(&DimensionScores::from_values(s).unwrap(), &p).value();
            let hc = aggregate_holistic(&DimensionScores::from_values(s.map(|v| v * c)).unwrap(), &p).value();
            prop_assert!((hc - c * h).abs() < 1e-9);
        }

        #[test]
        fn holistic_permutation_invariant(s in scores(), p in profiles(), rot in 0usize..6) {
            let w = p.values();
            let direct: f64 = (0..6).map(|i| w[i] * s[i]).sum();
            let rotated: f64 = (0..6).map(|i| w[(i + rot) % 6] * s[(i + rot) % 6]).sum();
            let h = aggregate_holistic(&DimensionScores::from_values(s).unwrap(), &p).value();
            prop_assert!((direct - rotated).abs() < 1e-9);
            prop_assert!((h - direct).abs() < 1e-9);
        }

        #[test]
        fn holistic_monotone(s in prop::array::uniform6(0.0f64..=9.0), p in profiles(), i in 0usize..6, bump in 0.01f64..1.0) {
            let base = aggregate_holistic(&DimensionScores::from_values(s).unwrap(), &p).value();
            let mut t = s;
            t[i] += bump;
            let up = aggregate_holistic(&DimensionScores::from_values(t).unwrap(), &p).value();
            prop_assert!(up > base);
        }

        #[test]
        fn parser_is_total(text in ".{0,200}") {
            // any input yields a parse or a single typed error, never a panic
            let _ = parse_reply(&text, PromptMode::Composite);
            let _ = parse_reply(&text, PromptMode::Standard);
        }
    }
}
