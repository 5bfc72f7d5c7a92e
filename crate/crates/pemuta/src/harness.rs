//! Dataset manifests, the configuration matrix runner and result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pemuta_core::metrics::{
    dataset_stats, DatasetRecord, DatasetStats, EvalProvenance, EvalResult, ScoreSeries,
    StdEstimator, Target,
};
use pemuta_core::prompting::{format_exemplar, Exemplar, PromptConfig, PromptMode};
use pemuta_core::reconstruct::ReconstructedDocument;
use pemuta_core::report::Assessment;
use pemuta_core::rubric::Score;

use crate::pipeline::{load_document, Assessor, PipelineError};

/// Three-record pool used when no `--pool` file is given.
pub const DEFAULT_POOL_CSV: &str = include_str!("../data/default_pool.csv");

pub const MANIFEST_HEADER: [&str; 9] = [
    "id",
    "doc_path",
    "structure",
    "logic",
    "originality",
    "writing",
    "proficiency",
    "rigor",
    "holistic",
];

fn parse_score(id: &str, column: &str, cell: &str) -> Result<Option<Score>, PipelineError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let value: f64 = cell.parse().map_err(|_| {
        PipelineError::Manifest(format!(
            "record {id}: {column} value {cell:?} is not a number"
        ))
    })?;
    Score::new(value).map(Some).map_err(|_| {
        PipelineError::Manifest(format!(
            "record {id}: {column} value {value} is outside [0, 10]"
        ))
    })
}

/// Reads a manifest: `id, doc_path`, six dimension scores, holistic.
/// A header row is expected; empty score cells mean "not annotated".
pub fn parse_manifest(text: &str) -> Result<Vec<DatasetRecord>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| PipelineError::Manifest(e.to_string()))?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(PipelineError::Manifest(format!(
                "row {} has {} columns, expected {}",
                i + 2,
                row.len(),
                MANIFEST_HEADER.len()
            )));
        }
        let id = row[0].to_string();
        if id.is_empty() || !seen.insert(id.clone()) {
            return Err(PipelineError::Manifest(format!(
                "row {}: empty or duplicate id {id:?}",
                i + 2
            )));
        }
        let mut scores = [None; 7];
        for (k, slot) in scores.iter_mut().enumerate() {
            *slot = parse_score(&id, MANIFEST_HEADER[k + 2], &row[k + 2])?;
        }
        records.push(DatasetRecord::partial(id, &row[1], scores));
    }
    Ok(records)
}

pub fn load_manifest(path: &Path) -> Result<Vec<DatasetRecord>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_manifest(&text)
}

/// Writes records in manifest format.
pub fn manifest_csv(records: &[DatasetRecord]) -> String {
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for r in records {
        let cells: Vec<String> = Target::ALL
            .iter()
            .map(|t| {
                r.score(*t)
                    .map(|s| format!("{:?}", s.value()))
                    .unwrap_or_default()
            })
            .collect();
        let _ = writeln!(out, "{},{},{}", r.id, r.doc_path, cells.join(","));
    }
    out
}

pub fn parse_pool(text: &str) -> Result<Vec<Exemplar>, PipelineError> {
    parse_manifest(text)?
        .iter()
        .map(|r| format_exemplar(r).map_err(PipelineError::from))
        .collect()
}

pub fn default_pool() -> Vec<Exemplar> {
    parse_pool(DEFAULT_POOL_CSV).expect("embedded pool is valid")
}

/// Loads every record's document, resolving paths against `base`.
pub fn load_documents(
    records: &[DatasetRecord],
    base: &Path,
) -> BTreeMap<String, Result<ReconstructedDocument, PipelineError>> {
    records
        .iter()
        .map(|r| {
            let path = base.join(&r.doc_path);
            (r.id.clone(), load_document(&path))
        })
        .collect()
}

/// A configuration with the label used in result tables.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledConfig {
    pub label: String,
    pub config: PromptConfig,
}

impl LabeledConfig {
    pub fn hierarchical(&self) -> bool {
        self.config.mode().is_hierarchical()
    }

    pub fn role_play(&self) -> bool {
        self.config.use_role_play()
    }

    pub fn few_shot(&self) -> bool {
        self.config.shot_count() > 0
    }
}

fn variant(
    base: &PromptConfig,
    mode: PromptMode,
    role: bool,
    shots: usize,
) -> Result<PromptConfig, PipelineError> {
    let mut c = PromptConfig::new(mode, role, shots)?
        .with_weights(*base.weight_profile())
        .with_seed(base.random_seed())
        .with_context_budget(base.context_budget())?;
    if role {
        c = c.with_persona(base.persona_text())?;
    }
    Ok(c)
}

/// The four component-ablation rows: standard prompting, hierarchical with
/// role play, hierarchical with exemplars, and all three together.
/// `hierarchical_mode` picks composite or staged for the hierarchical rows.
pub fn component_presets(
    base: &PromptConfig,
    hierarchical_mode: PromptMode,
) -> Result<Vec<LabeledConfig>, PipelineError> {
    let shots = if base.shot_count() > 0 {
        base.shot_count()
    } else {
        2
    };
    let rows = [
        ("standard", PromptMode::Standard, false, 0),
        ("H-P+R-P", hierarchical_mode, true, 0),
        ("H-P+F-S", hierarchical_mode, false, shots),
        ("full", hierarchical_mode, true, shots),
    ];
    rows.into_iter()
        .map(|(label, mode, role, k)| {
            Ok(LabeledConfig {
                label: label.into(),
                config: variant(base, mode, role, k)?,
            })
        })
        .collect()
}

/// The full configuration at each exemplar count in `shots`.
pub fn shot_sweep(
    base: &PromptConfig,
    hierarchical_mode: PromptMode,
    shots: impl IntoIterator<Item = usize>,
) -> Result<Vec<LabeledConfig>, PipelineError> {
    shots
        .into_iter()
        .map(|k| {
            Ok(LabeledConfig {
                label: format!("{k}-shot"),
                config: variant(base, hierarchical_mode, true, k)?,
            })
        })
        .collect()
}

/// One configuration's metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub label: String,
    pub config: PromptConfig,
    pub result: EvalResult,
}

impl MatrixRow {
    pub fn toggles(&self) -> [bool; 3] {
        [
            self.config.mode().is_hierarchical(),
            self.config.use_role_play(),
            self.config.shot_count() > 0,
        ]
    }
}

fn checkpoint_path(dir: &Path, label: &str, id: &str) -> PathBuf {
    let safe: String = label
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    dir.join(safe).join(format!("{id}.json"))
}

fn read_checkpoint(path: &Path, config: &PromptConfig) -> Option<Assessment> {
    let bytes = fs::read(path).ok()?;
    let a = Assessment::from_json(&bytes).ok()?;
    let p = a.provenance();
    let same = p.mode == config.mode()
        && p.shot_count == config.shot_count()
        && p.role_play == config.use_role_play()
        && p.seeds.run_seed == config.random_seed()
        && p.weight_profile == *config.weight_profile();
    same.then_some(a)
}

/// Assesses every record outside the exemplar pool under each
/// configuration and pairs predictions with expert scores.
///
/// With `reports_dir`, each assessment is written to
/// `<reports_dir>/<label>/<id>.json` and reused on later runs whose
/// configuration matches. Failed records are listed in the row's provenance
/// and left out of its series.
pub fn run_config_matrix(
    records: &[DatasetRecord],
    documents: &BTreeMap<String, Result<ReconstructedDocument, PipelineError>>,
    configs: &[LabeledConfig],
    assessor: &Assessor<'_>,
    reports_dir: Option<&Path>,
    mut on_failure: impl FnMut(&str, &str, &PipelineError),
) -> Result<Vec<MatrixRow>, PipelineError> {
    let pool_ids: Vec<&str> = assessor.pool.iter().map(|e| e.source_id.as_str()).collect();
    let mut rows = Vec::with_capacity(configs.len());
    for lc in configs {
        let mut provenance = EvalProvenance {
            config_label: lc.label.clone(),
            run_seed: lc.config.random_seed(),
            ..EvalProvenance::default()
        };
        let mut pairs: BTreeMap<Target, Vec<(String, f64, f64)>> = BTreeMap::new();
        for record in records {
            if pool_ids.contains(&record.id.as_str()) {
                provenance.excluded_ids.push(record.id.clone());
                continue;
            }
            let checkpoint = reports_dir.map(|d| checkpoint_path(d, &lc.label, &record.id));
            let cached = checkpoint
                .as_deref()
                .and_then(|p| read_checkpoint(p, &lc.config));
            let outcome = match cached {
                Some(a) => Ok(a),
                None => match documents.get(&record.id) {
                    Some(Ok(doc)) => assessor.assess(doc, &lc.config),
                    Some(Err(e)) => Err(PipelineError::Manifest(format!(
                        "document unavailable: {e}"
                    ))),
                    None => Err(PipelineError::Manifest("document not loaded".into())),
                },
            };
            let assessment = match outcome {
                Ok(a) => a,
                Err(e) => {
                    on_failure(&lc.label, &record.id, &e);
                    provenance.failed_ids.push(record.id.clone());
                    continue;
                }
            };
            if let Some(path) = &checkpoint {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
                }
                fs::write(path, assessment.to_json()).map_err(|e| PipelineError::io(path, e))?;
            }
            for target in Target::ALL {
                let predicted = match target {
                    Target::Holistic => Some(assessment.holistic()),
                    Target::Dimension(d) => assessment.dimension_score(d),
                };
                if let (Some(truth), Some(pred)) = (record.score(target), predicted) {
                    pairs.entry(target).or_default().push((
                        record.id.clone(),
                        truth.value(),
                        pred.value(),
                    ));
                }
            }
        }
        let series: Vec<ScoreSeries> = Target::ALL
            .iter()
            .filter_map(|t| pairs.remove(t).map(|p| ScoreSeries::from_pairs(*t, p)))
            .collect();
        let result = EvalResult::from_series(&series, provenance)?;
        rows.push(MatrixRow {
            label: lc.label.clone(),
            config: lc.config.clone(),
            result,
        });
    }
    Ok(rows)
}

fn mark(on: bool) -> &'static str {
    if on {
        "✓"
    } else {
        "✗"
    }
}

pub const RESULTS_HEADER: [&str; 15] = [
    "config",
    "mode",
    "hierarchical",
    "role_play",
    "few_shot",
    "shots",
    "target",
    "n",
    "mean",
    "std",
    "mae",
    "mse",
    "pcc",
    "complete",
    "failed",
];

/// One line per configuration and target; PCC is empty when undefined.
pub fn results_csv(rows: &[MatrixRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for row in rows {
        let [h, r, f] = row.toggles();
        for m in &row.result.targets {
            w.write_record([
                row.label.clone(),
                row.config.mode().to_string(),
                h.to_string(),
                r.to_string(),
                f.to_string(),
                row.config.shot_count().to_string(),
                m.target.key().to_string(),
                m.n.to_string(),
                format!("{:?}", m.mean),
                format!("{:?}", m.std),
                format!("{:?}", m.mae),
                format!("{:?}", m.mse),
                m.pcc.map(|p| format!("{p:?}")).unwrap_or_default(),
                row.result.is_complete().to_string(),
                row.result.provenance.failed_ids.join(" "),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

/// Markdown tables: a toggle overview, then one metric table per target.
pub fn results_markdown(rows: &[MatrixRow]) -> String {
    let mut out = String::from("# Results\n\n## Configurations\n\n");
    out.push_str("| Config | Mode | H-P | R-P | F-S | Shots | Excluded | Failed |\n");
    out.push_str("|---|---|:-:|:-:|:-:|--:|--:|--:|\n");
    for row in rows {
        let [h, r, f] = row.toggles();
        let p = &row.result.provenance;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            row.label,
            row.config.mode(),
            mark(h),
            mark(r),
            mark(f),
            row.config.shot_count(),
            p.excluded_ids.len(),
            p.failed_ids.len()
        );
    }
    for target in Target::ALL {
        if !rows.iter().any(|r| r.result.get(target).is_some()) {
            continue;
        }
        let _ = writeln!(out, "\n## {}\n", target.name());
        out.push_str(
            "| Config | N | Mean | Std | MAE | MSE | PCC |\n|---|--:|--:|--:|--:|--:|--:|\n",
        );
        for row in rows {
            if let Some(m) = row.result.get(target) {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    row.label,
                    m.n,
                    cell(Some(m.mean)),
                    cell(Some(m.std)),
                    cell(Some(m.mae)),
                    cell(Some(m.mse)),
                    cell(m.pcc)
                );
            }
        }
    }
    out
}

pub fn write_results(dir: &Path, rows: &[MatrixRow]) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    fs::write(&csv_path, results_csv(rows)).map_err(|e| PipelineError::io(&csv_path, e))?;
    let md_path = dir.join("results.md");
    fs::write(&md_path, results_markdown(rows)).map_err(|e| PipelineError::io(&md_path, e))?;
    Ok(())
}

pub fn stats(
    records: &[DatasetRecord],
    estimator: StdEstimator,
) -> Result<DatasetStats, PipelineError> {
    Ok(dataset_stats(records, estimator)?)
}

pub fn stats_csv(stats: &DatasetStats) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "n", "mean", "std", "min", "max", "degenerate"])
        .expect("in-memory write");
    for s in &stats.targets {
        w.write_record([
            s.target.key().to_string(),
            s.n.to_string(),
            format!("{:?}", s.mean),
            format!("{:?}", s.std),
            format!("{:?}", s.min),
            format!("{:?}", s.max),
            s.degenerate.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn stats_markdown(stats: &DatasetStats) -> String {
    let est = match stats.estimator {
        StdEstimator::Sample => "sample, n-1",
        StdEstimator::Population => "population, n",
    };
    let mut out =
        format!("| Target | N | Mean | Std ({est}) | Min | Max |\n|---|--:|--:|--:|--:|--:|\n");
    for s in &stats.targets {
        let std = if s.degenerate {
            format!("{:.2}*", s.std)
        } else {
            format!("{:.2}", s.std)
        };
        let _ = writeln!(
            out,
            "| {} | {} | {:.2} | {} | {:.2} | {:.2} |",
            s.target.name(),
            s.n,
            s.mean,
            std,
            s.min,
            s.max
        );
    }
    if stats.targets.iter().any(|s| s.degenerate) {
        out.push_str("\n\\* single record, standard deviation reported as 0\n");
    }
    out
}
