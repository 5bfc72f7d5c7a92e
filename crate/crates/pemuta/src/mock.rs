//! Scripted offline provider.
//!
//! A script is an ordered list of rules. Each request is answered by the
//! first rule whose predicate matches the joined message content.
//!
//! ```json
//! {"rules": [
//!   {"when": {"contains": "Structure"}, "reply": "```json\n{...}\n```"},
//!   {"when": "always", "error": {"kind": "rate_limited"}, "times": 1}
//! ]}
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;

use pemuta_core::metrics::DatasetRecord;
use serde::{Deserialize, Serialize};

use crate::llmclient::{ChatRequest, ChatResponse, ClientError, Provider, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    Contains(String),
    ContainsAny(Vec<String>),
    ContainsAll(Vec<String>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn matches(&self, content: &str) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Contains(s) => content.contains(s.as_str()),
            Predicate::ContainsAny(v) => v.iter().any(|s| content.contains(s.as_str())),
            Predicate::ContainsAll(v) => v.iter().all(|s| content.contains(s.as_str())),
            Predicate::Not(p) => !p.matches(content),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptedError {
    Auth,
    RateLimited,
    Timeout,
    Provider {
        status: u16,
        #[serde(default)]
        body: String,
    },
}

impl ScriptedError {
    fn to_error(&self) -> ClientError {
        match self {
            ScriptedError::Auth => ClientError::Auth("scripted".into()),
            ScriptedError::RateLimited => ClientError::RateLimited { attempts: 1 },
            ScriptedError::Timeout => ClientError::Timeout,
            ScriptedError::Provider { status, body } => ClientError::Provider {
                status: *status,
                body: body.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub when: Predicate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ScriptedError>,
    /// How many requests the rule may answer; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub rules: Vec<Rule>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed script: {0}")]
    Malformed(String),
}

impl Script {
    pub fn from_json(text: &str) -> Result<Script, ScriptError> {
        let script: Script =
            serde_json::from_str(text).map_err(|e| ScriptError::Malformed(e.to_string()))?;
        for (i, rule) in script.rules.iter().enumerate() {
            if rule.reply.is_some() == rule.error.is_some() {
                return Err(ScriptError::Malformed(format!(
                    "rule {i} needs exactly one of reply or error"
                )));
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Script, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Script::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("script serializes");
        text.push('\n');
        text
    }
}

/// One answered (or refused) request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchEntry {
    /// Index of the rule that answered, or `None` for an unmatched request.
    pub rule: Option<usize>,
    pub content_chars: usize,
}

#[derive(Debug)]
struct State {
    used: Vec<u32>,
    log: Vec<MatchEntry>,
}

pub struct MockProvider {
    script: Script,
    state: Mutex<State>,
}

impl MockProvider {
    pub fn new(script: Script) -> Self {
        let used = vec![0; script.rules.len()];
        MockProvider {
            script,
            state: Mutex::new(State {
                used,
                log: Vec::new(),
            }),
        }
    }

    pub fn match_log(&self) -> Vec<MatchEntry> {
        self.state.lock().expect("mock state poisoned").log.clone()
    }
}

fn preview(content: &str) -> String {
    let mut p: String = content.chars().take(80).collect();
    if content.chars().count() > 80 {
        p.push_str("...");
    }
    p.replace('\n', " ")
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let content = request.joined_content();
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let found = self.script.rules.iter().enumerate().find(|(i, rule)| {
            rule.times.is_none_or(|t| state.used[*i] < t) && rule.when.matches(&content)
        });
        let Some((index, rule)) = found else {
            state.log.push(MatchEntry {
                rule: None,
                content_chars: content.chars().count(),
            });
            return Err(ClientError::UnmatchedRequest(preview(&content)));
        };
        state.used[index] += 1;
        state.log.push(MatchEntry {
            rule: Some(index),
            content_chars: content.chars().count(),
        });
        if let Some(e) = &rule.error {
            return Err(e.to_error());
        }
        let reply = rule.reply.clone().unwrap_or_default();
        Ok(ChatResponse {
            token_usage: TokenUsage {
                prompt: content.chars().count().div_ceil(4) as u64,
                completion: reply.chars().count().div_ceil(4) as u64,
            },
            content: reply,
            latency_ms: 0,
            provider_id: "mock".into(),
        })
    }
}

/// Marker placed in echo justifications so synthesis requests, which carry
/// justifications but not the thesis text, route back to the same record.
pub fn echo_marker(id: &str) -> String {
    format!("[echo:{id}]")
}

fn fmt_score(v: f64) -> String {
    format!("{v:?}")
}

/// A fenced block that satisfies every reply parser at once: six dimension
/// entries, a holistic value and feedback.
pub fn universal_reply(record: &DatasetRecord, shift: f64) -> Option<String> {
    let dims = record.dimension_scores()?;
    let holistic = record.holistic()?;
    let marker = echo_marker(&record.id);
    let mut out = String::from("```json\n{\n");
    for (d, s) in dims.iter() {
        let _ = writeln!(
            out,
            "  \"{}\": {{\"score\": {}, \"justification\": \"Scored {} on {}. {marker}\"}},",
            d.key(),
            fmt_score(s.value() + shift),
            fmt_score(s.value() + shift),
            d.key(),
        );
    }
    let _ = writeln!(
        out,
        "  \"holistic\": {},",
        fmt_score(holistic.value() + shift)
    );
    let _ = writeln!(
        out,
        "  \"feedback\": \"Echoed assessment for record {}.\"",
        record.id
    );
    out.push_str("}\n```\n");
    Some(out)
}

/// Builds a script that answers each record's requests with its expert
/// scores plus `shift`. `anchor` is text that occurs in the record's thesis.
pub fn echo_script<'a>(
    entries: impl IntoIterator<Item = (&'a DatasetRecord, String)>,
    shift: f64,
) -> Script {
    let rules = entries
        .into_iter()
        .filter_map(|(record, anchor)| {
            let reply = universal_reply(record, shift)?;
            Some(Rule {
                when: Predicate::ContainsAny(vec![anchor, echo_marker(&record.id)]),
                reply: Some(reply),
                error: None,
                times: None,
            })
        })
        .collect();
    Script { rules }
}
