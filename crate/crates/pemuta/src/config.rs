//! Run configuration: defaults, then a TOML file, then environment, then flags.
//!
//! ```toml
//! templates_dir = "my-templates"    # optional <name>.txt overrides
//! pool = "pool.csv"                 # exemplar pool in manifest format
//!
//! [provider]
//! kind = "openai"                   # openai | mock | echo
//! api_base = "https://api.example.com/v1"
//! model = "some-model"
//! temperature = 0.0
//! max_output_tokens = 2048
//! timeout_secs = 120
//! script = "script.json"            # mock only
//! echo_shift = 0.0                  # echo only
//!
//! [pacing]
//! min_interval = 30.0
//! max_retries = 3
//! backoff_base = 2.0
//!
//! [prompt]
//! mode = "composite"                # composite | staged | standard
//! shots = 2
//! role_play = true
//! persona = "..."
//! weights = "uniform"               # uniform | core | path to a weights file
//! seed = 0
//! context_budget = 131072
//! ```
//!
//! The API key is read only from `PEMUTA_API_KEY`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use pemuta_core::prompting::{
    PromptConfig, PromptMode, Templates, DEFAULT_CONTEXT_BUDGET, DEFAULT_PERSONA,
};
use pemuta_core::rubric::WeightProfile;
use serde::{Deserialize, Serialize};

use crate::llmclient::{PacingPolicy, DEFAULT_MAX_OUTPUT_TOKENS};
use crate::openai::{ENV_API_BASE, ENV_API_KEY, ENV_MODEL};
use crate::pipeline::PipelineError;

pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_TIMEOUT_SECS: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// OpenAI-compatible HTTP endpoint.
    Openai,
    /// Scripted replies from a JSON file.
    Mock,
    /// Replies with the manifest's expert scores (plus a shift).
    Echo,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderSection {
    pub kind: Option<ProviderKind>,
    pub api_base: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub timeout_secs: Option<f64>,
    pub script: Option<PathBuf>,
    pub echo_shift: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacingSection {
    pub min_interval: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptSection {
    pub mode: Option<PromptMode>,
    pub shots: Option<usize>,
    pub role_play: Option<bool>,
    pub persona: Option<String>,
    pub weights: Option<String>,
    pub seed: Option<u64>,
    pub context_budget: Option<usize>,
}

/// The optional layer shared by the config file and the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Layer {
    pub templates_dir: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub provider: ProviderSection,
    pub pacing: PacingSection,
    pub prompt: PromptSection,
}

impl Layer {
    pub fn from_toml(text: &str) -> Result<Layer, PipelineError> {
        toml::from_str(text)
            .map_err(|e| PipelineError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Layer, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut layer = Layer::from_toml(&text)?;
        // relative paths in the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut layer.templates_dir,
            &mut layer.pool,
            &mut layer.provider.script,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(w) = &mut layer.prompt.weights {
            if !matches!(w.as_str(), "uniform" | "core") && Path::new(w.as_str()).is_relative() {
                *w = base.join(w.as_str()).display().to_string();
            }
        }
        Ok(layer)
    }

    fn or(self, lower: Layer) -> Layer {
        Layer {
            templates_dir: self.templates_dir.or(lower.templates_dir),
            pool: self.pool.or(lower.pool),
            provider: ProviderSection {
                kind: self.provider.kind.or(lower.provider.kind),
                api_base: self.provider.api_base.or(lower.provider.api_base),
                model: self.provider.model.or(lower.provider.model),
                temperature: self.provider.temperature.or(lower.provider.temperature),
                max_output_tokens: self
                    .provider
                    .max_output_tokens
                    .or(lower.provider.max_output_tokens),
                timeout_secs: self.provider.timeout_secs.or(lower.provider.timeout_secs),
                script: self.provider.script.or(lower.provider.script),
                echo_shift: self.provider.echo_shift.or(lower.provider.echo_shift),
            },
            pacing: PacingSection {
                min_interval: self.pacing.min_interval.or(lower.pacing.min_interval),
                max_retries: self.pacing.max_retries.or(lower.pacing.max_retries),
                backoff_base: self.pacing.backoff_base.or(lower.pacing.backoff_base),
            },
            prompt: PromptSection {
                mode: self.prompt.mode.or(lower.prompt.mode),
                shots: self.prompt.shots.or(lower.prompt.shots),
                role_play: self.prompt.role_play.or(lower.prompt.role_play),
                persona: self.prompt.persona.or(lower.prompt.persona),
                weights: self.prompt.weights.or(lower.prompt.weights),
                seed: self.prompt.seed.or(lower.prompt.seed),
                context_budget: self.prompt.context_budget.or(lower.prompt.context_budget),
            },
        }
    }
}

/// Fully resolved configuration, echoed into every run's provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub provider: ProviderKind,
    pub api_base: String,
    pub model: String,
    /// Whether an API key was found; the key itself is never written out.
    pub api_key_present: bool,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: f64,
    pub script: Option<PathBuf>,
    pub echo_shift: f64,
    pub pacing: PacingPolicy,
    pub weights: String,
    pub prompt: PromptConfig,
    pub templates_dir: Option<PathBuf>,
    pub template_hash: String,
    pub pool: Option<PathBuf>,
}

fn seconds(name: &str, v: f64) -> Result<Duration, PipelineError> {
    Duration::try_from_secs_f64(v).map_err(|_| {
        PipelineError::Config(format!(
            "{name} must be a non-negative number of seconds, got {v}"
        ))
    })
}

/// `uniform`, `core`, or a JSON/TOML file with one weight per dimension.
pub fn resolve_weights(choice: &str) -> Result<WeightProfile, PipelineError> {
    match choice {
        "uniform" => Ok(WeightProfile::uniform()),
        "core" => Ok(WeightProfile::core_weighted()),
        path => {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<WeightProfile>(&text).map_err(|e| e.to_string())
            } else {
                toml::from_str::<WeightProfile>(&text).map_err(|e| e.message().to_string())
            };
            parsed
                .map_err(|e| PipelineError::Config(format!("weights file {}: {e}", path.display())))
        }
    }
}

/// Applies `<name>.txt` files found in `dir` over the default templates.
pub fn load_templates(dir: Option<&Path>) -> Result<Templates, PipelineError> {
    let mut templates = Templates::default();
    if let Some(dir) = dir {
        if !dir.is_dir() {
            return Err(PipelineError::Config(format!(
                "templates directory {} not found",
                dir.display()
            )));
        }
        for name in Templates::NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text =
                    std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
                templates.set(name, text);
            }
        }
    }
    Ok(templates)
}

/// Environment variables as a layer.
pub fn env_layer(get: impl Fn(&str) -> Option<String>) -> Layer {
    let mut layer = Layer::default();
    layer.provider.api_base = get(ENV_API_BASE).filter(|s| !s.is_empty());
    layer.provider.model = get(ENV_MODEL).filter(|s| !s.is_empty());
    layer
}

impl RunConfig {
    /// Merges `flags` over environment over `file` over built-in defaults.
    pub fn resolve(
        flags: Layer,
        file: Option<Layer>,
        get_env: impl Fn(&str) -> Option<String>,
    ) -> Result<RunConfig, PipelineError> {
        let api_key = get_env(ENV_API_KEY).filter(|s| !s.is_empty());
        let merged = flags.or(env_layer(&get_env)).or(file.unwrap_or_default());
        let p = merged.prompt;
        let mode = p.mode.unwrap_or_default();
        let shots = p
            .shots
            .unwrap_or(if mode == PromptMode::Standard { 0 } else { 2 });
        let role_play = p.role_play.unwrap_or(mode != PromptMode::Standard);
        let weights = p.weights.unwrap_or_else(|| "uniform".into());
        let mut prompt = PromptConfig::new(mode, role_play, shots)?
            .with_weights(resolve_weights(&weights)?)
            .with_seed(p.seed.unwrap_or(0))
            .with_context_budget(p.context_budget.unwrap_or(DEFAULT_CONTEXT_BUDGET))?;
        prompt = prompt.with_persona(p.persona.unwrap_or_else(|| DEFAULT_PERSONA.into()))?;
        let defaults = PacingPolicy::default();
        let pacing = PacingPolicy {
            min_interval: match merged.pacing.min_interval {
                Some(v) => seconds("min_interval", v)?,
                None => defaults.min_interval,
            },
            max_retries: merged.pacing.max_retries.unwrap_or(defaults.max_retries),
            backoff_base: match merged.pacing.backoff_base {
                Some(v) => seconds("backoff_base", v)?,
                None => defaults.backoff_base,
            },
        };
        let temperature = merged.provider.temperature.unwrap_or(0.0);
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(PipelineError::Config(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        let timeout_secs = merged.provider.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
        seconds("timeout_secs", timeout_secs)?;
        let templates = load_templates(merged.templates_dir.as_deref())?;
        let provider = merged.provider.kind.unwrap_or(ProviderKind::Openai);
        if provider == ProviderKind::Mock && merged.provider.script.is_none() {
            return Err(PipelineError::Config(
                "the mock provider needs --script".into(),
            ));
        }
        Ok(RunConfig {
            provider,
            api_base: merged
                .provider
                .api_base
                .unwrap_or_else(|| DEFAULT_API_BASE.into()),
            model: merged.provider.model.unwrap_or_else(|| match provider {
                ProviderKind::Openai => String::new(),
                _ => "mock".into(),
            }),
            api_key_present: api_key.is_some(),
            api_key,
            temperature,
            max_output_tokens: merged
                .provider
                .max_output_tokens
                .unwrap_or(DEFAULT_MAX_OUTPUT_TOKENS),
            timeout_secs,
            script: merged.provider.script,
            echo_shift: merged.provider.echo_shift.unwrap_or(0.0),
            pacing,
            weights,
            prompt,
            templates_dir: merged.templates_dir,
            template_hash: templates.hash(),
            pool: merged.pool,
        })
    }

    pub fn templates(&self) -> Result<Templates, PipelineError> {
        load_templates(self.templates_dir.as_deref())
    }
}
