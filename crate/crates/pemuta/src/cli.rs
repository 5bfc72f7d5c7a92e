//! Command-line entry point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pemuta_core::metrics::{DatasetRecord, StdEstimator};
use pemuta_core::prompting::{Exemplar, PromptMode};
use pemuta_core::reconstruct::{self, ReconstructedDocument};
use pemuta_core::report::{render, Assessment, RenderFormat};
use serde::Serialize;

use crate::config::{Layer, ProviderKind, RunConfig};
use crate::harness::{
    component_presets, default_pool, load_documents, load_manifest, parse_pool, run_config_matrix,
    shot_sweep, stats, stats_csv, stats_markdown, write_results, LabeledConfig,
};
use crate::llmclient::{Client, Provider};
use crate::mock::{echo_script, MockProvider, Script};
use crate::openai::OpenAiProvider;
use crate::pipeline::{ingest_layout, load_document, source_id_for, Assessor, PipelineError};

#[derive(Debug, Parser)]
#[command(
    name = "pemuta",
    version,
    about = "Rubric-based assessment of undergraduate theses with LLMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct `.layout.jsonl` files into `.doc.json` documents.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write a plain-text rendering next to each document.
        #[arg(long)]
        text: bool,
    },
    /// Assess one thesis (`.doc.json` or `.layout.jsonl`).
    Assess {
        document: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Manifest with expert scores; needed by the echo provider.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Assess every record of a manifest under the configured prompt and score the predictions.
    Evaluate {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the ablation matrix over a manifest.
    Ablate {
        manifest: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Matrix::All)]
        matrix: Matrix,
        /// Exemplar counts for the shot sweep.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        sweep: Vec<usize>,
    },
    /// Summary statistics of the expert scores in a manifest.
    Stats {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Estimator::Sample)]
        estimator: Estimator,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Matrix {
    /// The four component rows.
    Components,
    /// The full configuration at each exemplar count.
    Shots,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Estimator {
    Sample,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Composite,
    Staged,
    Standard,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Composite => PromptMode::Composite,
            ModeArg::Staged => PromptMode::Staged,
            ModeArg::Standard => PromptMode::Standard,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Mock provider script.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Added to every expert score by the echo provider.
    #[arg(long, allow_negative_numbers = true)]
    pub echo_shift: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub api_base: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Few-shot exemplars per prompt.
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, overrides_with = "no_role_play")]
    pub role_play: bool,
    #[arg(long, overrides_with = "role_play")]
    pub no_role_play: bool,
    #[arg(long)]
    pub persona: Option<String>,
    /// `uniform`, `core`, or a weights file (JSON or TOML).
    #[arg(long)]
    pub weights: Option<String>,
    /// Seconds between successive requests.
    #[arg(long)]
    pub min_interval: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Exemplar pool in manifest format.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl RunArgs {
    fn layer(&self) -> Layer {
        let mut l = Layer {
            templates_dir: self.templates.clone(),
            pool: self.pool.clone(),
            ..Layer::default()
        };
        l.provider.kind = self.provider;
        l.provider.script = self.script.clone();
        l.provider.echo_shift = self.echo_shift;
        l.provider.model = self.model.clone();
        l.provider.api_base = self.api_base.clone();
        l.provider.temperature = self.temperature;
        l.pacing.min_interval = self.min_interval;
        l.pacing.max_retries = self.max_retries;
        l.prompt.mode = self.mode.map(PromptMode::from);
        l.prompt.shots = self.shots;
        l.prompt.role_play = match (self.role_play, self.no_role_play) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        };
        l.prompt.persona = self.persona.clone();
        l.prompt.weights = self.weights.clone();
        l.prompt.seed = self.seed;
        l
    }

    fn resolve(&self) -> Result<RunConfig, PipelineError> {
        let file = self.config.as_deref().map(Layer::load).transpose()?;
        RunConfig::resolve(self.layer(), file, |k| std::env::var(k).ok())
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    inputs: Vec<String>,
    config: &'a RunConfig,
    pool_ids: Vec<String>,
    configs: Vec<ConfigEcho<'a>>,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    label: &'a str,
    config: &'a pemuta_core::prompting::PromptConfig,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn write_provenance(
    out: &Path,
    command: &str,
    inputs: &[&Path],
    config: &RunConfig,
    pool: &[Exemplar],
    configs: &[LabeledConfig],
) -> Result<(), PipelineError> {
    let p = Provenance {
        tool: "pemuta",
        version: env!("CARGO_PKG_VERSION"),
        command,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
        pool_ids: pool.iter().map(|e| e.source_id.clone()).collect(),
        configs: configs
            .iter()
            .map(|c| ConfigEcho {
                label: &c.label,
                config: &c.config,
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&p).expect("provenance serializes");
    bytes.push(b'\n');
    write_file(&out.join("provenance.json"), bytes)
}

fn load_pool(config: &RunConfig) -> Result<Vec<Exemplar>, PipelineError> {
    match &config.pool {
        Some(path) => {
            parse_pool(&fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?)
        }
        None => Ok(default_pool()),
    }
}

/// Text used by echo rules to recognise a thesis in a prompt.
fn anchor(doc: &ReconstructedDocument) -> String {
    doc.paragraphs()
        .next()
        .map(|p| p.text.clone())
        .unwrap_or_else(|| doc.title.clone())
}

fn make_provider(
    config: &RunConfig,
    echo: &[(&DatasetRecord, &ReconstructedDocument)],
) -> Result<Box<dyn Provider>, PipelineError> {
    Ok(match config.provider {
        ProviderKind::Openai => {
            if config.model.is_empty() {
                return Err(PipelineError::Config(
                    "no model configured; set PEMUTA_MODEL or --model".into(),
                ));
            }
            Box::new(OpenAiProvider::new(
                config.api_base.clone(),
                config.api_key.clone(),
                Duration::from_secs_f64(config.timeout_secs),
            ))
        }
        ProviderKind::Mock => {
            let path = config.script.as_deref().expect("resolve checks the script");
            let script = Script::load(path).map_err(|e| PipelineError::Config(e.to_string()))?;
            Box::new(MockProvider::new(script))
        }
        ProviderKind::Echo => {
            if echo.is_empty() {
                return Err(PipelineError::Config(
                    "the echo provider needs a manifest with expert scores".into(),
                ));
            }
            let entries = echo.iter().map(|(r, d)| (*r, anchor(d)));
            Box::new(MockProvider::new(echo_script(entries, config.echo_shift)))
        }
    })
}

fn assessor<'a>(
    client: &'a Client,
    config: &RunConfig,
    pool: Vec<Exemplar>,
) -> Result<Assessor<'a>, PipelineError> {
    let mut a = Assessor::new(client, config.model.clone(), pool);
    a.temperature = config.temperature;
    a.max_output_tokens = config.max_output_tokens;
    a.templates = config.templates()?;
    Ok(a)
}

fn manifest_base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn loaded<'a>(
    records: &'a [DatasetRecord],
    docs: &'a BTreeMap<String, Result<ReconstructedDocument, PipelineError>>,
) -> Vec<(&'a DatasetRecord, &'a ReconstructedDocument)> {
    records
        .iter()
        .filter_map(|r| match docs.get(&r.id) {
            Some(Ok(d)) => Some((r, d)),
            _ => None,
        })
        .collect()
}

fn cmd_ingest(inputs: &[PathBuf], out: &Path, text: bool) -> Result<(), PipelineError> {
    for input in inputs {
        let raw = fs::read_to_string(input).map_err(|e| PipelineError::io(input, e))?;
        let id = source_id_for(input);
        let doc = ingest_layout(&raw, &id)?;
        let target = out.join(format!("{id}.doc.json"));
        write_file(&target, reconstruct::to_json(&doc))?;
        if text {
            write_file(
                &out.join(format!("{id}.txt")),
                reconstruct::render_text(&doc),
            )?;
        }
        println!(
            "{} -> {} ({} sections, {} placeholders, {} furniture lines removed)",
            input.display(),
            target.display(),
            doc.sections.len(),
            doc.placeholder_count(),
            doc.stats.furniture_removed
        );
    }
    Ok(())
}

fn cmd_assess(
    document: &Path,
    run: &RunArgs,
    manifest: Option<&Path>,
) -> Result<(), PipelineError> {
    let config = run.resolve()?;
    let doc = load_document(document)?;
    let records = match manifest {
        Some(m) => load_manifest(m)?,
        None => Vec::new(),
    };
    let echo: Vec<(&DatasetRecord, &ReconstructedDocument)> = records
        .iter()
        .filter(|r| r.id == doc.source_id)
        .map(|r| (r, &doc))
        .collect();
    let pool = load_pool(&config)?;
    let client = Client::new(make_provider(&config, &echo)?, config.pacing);
    let assessor = assessor(&client, &config, pool.clone())?;
    let outcome = assessor.assess(&doc, &config.prompt)?;
    let reports = run.out.join("reports");
    write_file(
        &reports.join(format!("{}.json", doc.source_id)),
        outcome.to_json(),
    )?;
    match &outcome {
        Assessment::Report(r) => {
            write_file(
                &reports.join(format!("{}.md", doc.source_id)),
                render(r, RenderFormat::Markdown),
            )?;
            let dims: Vec<String> = r
                .dimensions
                .iter()
                .map(|a| format!("{} {}", a.dimension.key(), a.score))
                .collect();
            println!(
                "{}: holistic {} ({})",
                doc.source_id,
                r.holistic,
                dims.join(", ")
            );
        }
        Assessment::HolisticOnly(h) => println!("{}: holistic {}", doc.source_id, h.holistic),
    }
    let inputs: Vec<&Path> = std::iter::once(document).chain(manifest).collect();
    write_provenance(&run.out, "assess", &inputs, &config, &pool, &[])
}

fn cmd_matrix(
    command: &str,
    manifest: &Path,
    run: &RunArgs,
    pick: impl FnOnce(&RunConfig) -> Result<Vec<LabeledConfig>, PipelineError>,
) -> Result<(), PipelineError> {
    let config = run.resolve()?;
    let records = load_manifest(manifest)?;
    let docs = load_documents(&records, &manifest_base(manifest));
    let pool = load_pool(&config)?;
    let client = Client::new(
        make_provider(&config, &loaded(&records, &docs))?,
        config.pacing,
    );
    let assessor = assessor(&client, &config, pool.clone())?;
    let configs = pick(&config)?;
    let rows = run_config_matrix(
        &records,
        &docs,
        &configs,
        &assessor,
        Some(&run.out.join("reports")),
        |label, id, e| eprintln!("warning: {label}/{id} failed: error[{}]: {e}", e.name()),
    )?;
    write_results(&run.out, &rows)?;
    write_provenance(&run.out, command, &[manifest], &config, &pool, &configs)?;
    for row in &rows {
        let h = row.result.get(pemuta_core::metrics::Target::Holistic);
        match h {
            Some(m) => println!(
                "{:<10} holistic n={} mae={:.3} mse={:.3} pcc={}",
                row.label,
                m.n,
                m.mae,
                m.mse,
                m.pcc
                    .map(|p| format!("{p:.3}"))
                    .unwrap_or_else(|| "n/a".into())
            ),
            None => println!("{:<10} no successful assessments", row.label),
        }
    }
    Ok(())
}

fn cmd_stats(manifest: &Path, estimator: Estimator, out: &Path) -> Result<(), PipelineError> {
    let records = load_manifest(manifest)?;
    let est = match estimator {
        Estimator::Sample => StdEstimator::Sample,
        Estimator::Population => StdEstimator::Population,
    };
    let s = stats(&records, est)?;
    write_file(&out.join("stats.csv"), stats_csv(&s))?;
    let md = stats_markdown(&s);
    write_file(&out.join("stats.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest { inputs, out, text } => cmd_ingest(&inputs, &out, text),
        Command::Assess {
            document,
            run,
            manifest,
        } => cmd_assess(&document, &run, manifest.as_deref()),
        Command::Evaluate { manifest, run } => cmd_matrix("evaluate", &manifest, &run, |c| {
            Ok(vec![LabeledConfig {
                label: c.prompt.mode().to_string(),
                config: c.prompt.clone(),
            }])
        }),
        Command::Ablate {
            manifest,
            run,
            matrix,
            sweep,
        } => cmd_matrix("ablate", &manifest, &run, |c| {
            let hierarchical = match c.prompt.mode() {
                PromptMode::Staged => PromptMode::Staged,
                _ => PromptMode::Composite,
            };
            let mut configs = Vec::new();
            if matches!(matrix, Matrix::Components | Matrix::All) {
                configs.extend(component_presets(&c.prompt, hierarchical)?);
            }
            if matches!(matrix, Matrix::Shots | Matrix::All) {
                configs.extend(shot_sweep(&c.prompt, hierarchical, sweep)?);
            }
            Ok(configs)
        }),
        Command::Stats {
            manifest,
            estimator,
            out,
        } => cmd_stats(&manifest, estimator, &out),
    }
}

/// Runs the CLI and returns the process exit status: 0 on success, 2 for
/// usage errors, 1 for pipeline errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            1
        }
    }
}
