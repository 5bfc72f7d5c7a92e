//! Expert-annotated records, agreement metrics and dataset statistics.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::rubric::{Dimension, DimensionScores, Score, ScoreOutOfRange};

/// What a score series measures: one dimension or the holistic grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Dimension(Dimension),
    Holistic,
}

impl Target {
    /// The six dimensions in canonical order, then holistic.
    pub const ALL: [Target; 7] = [
        Target::Dimension(Dimension::Structure),
        Target::Dimension(Dimension::Logic),
        Target::Dimension(Dimension::Originality),
        Target::Dimension(Dimension::Writing),
        Target::Dimension(Dimension::Proficiency),
        Target::Dimension(Dimension::Rigor),
        Target::Holistic,
    ];

    pub const fn index(self) -> usize {
        match self {
            Target::Dimension(d) => d.index(),
            Target::Holistic => 6,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Target::Dimension(d) => d.name(),
            Target::Holistic => "Holistic",
        }
    }

    pub const fn key(self) -> &'static str {
        match self {
            Target::Dimension(d) => d.key(),
            Target::Holistic => "holistic",
        }
    }

    pub fn from_key(key: &str) -> Option<Target> {
        if key.trim().eq_ignore_ascii_case("holistic") {
            return Some(Target::Holistic);
        }
        Dimension::from_name(key).map(Target::Dimension)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let key = String::deserialize(d)?;
        Target::from_key(&key)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown target {key:?}")))
    }
}

/// One annotated thesis: where its document lives and the expert scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    /// Path to a `.doc.json` or `.layout.jsonl`, relative to the manifest.
    pub doc_path: String,
    scores: [Option<Score>; 7],
}

impl DatasetRecord {
    pub fn new(
        id: impl Into<String>,
        doc_path: impl Into<String>,
        dims: DimensionScores,
        holistic: Score,
    ) -> Self {
        let mut scores = [None; 7];
        for (d, s) in dims.iter() {
            scores[d.index()] = Some(s);
        }
        scores[6] = Some(holistic);
        DatasetRecord {
            id: id.into(),
            doc_path: doc_path.into(),
            scores,
        }
    }

    /// Validates raw values: six dimensions in canonical order, then holistic.
    pub fn from_values(
        id: impl Into<String>,
        doc_path: impl Into<String>,
        dims: [f64; 6],
        holistic: f64,
    ) -> Result<Self, ScoreOutOfRange> {
        Ok(DatasetRecord::new(
            id,
            doc_path,
            DimensionScores::from_values(dims)?,
            Score::new(holistic)?,
        ))
    }

    /// A record with some scores absent, indexed like [`Target::ALL`].
    pub fn partial(
        id: impl Into<String>,
        doc_path: impl Into<String>,
        scores: [Option<Score>; 7],
    ) -> Self {
        DatasetRecord {
            id: id.into(),
            doc_path: doc_path.into(),
            scores,
        }
    }

    pub fn score(&self, target: Target) -> Option<Score> {
        self.scores[target.index()]
    }

    pub fn first_missing(&self) -> Option<Target> {
        Target::ALL.into_iter().find(|t| self.score(*t).is_none())
    }

    pub fn dimension_scores(&self) -> Option<DimensionScores> {
        let mut out = [Score::new(0.0).ok()?; 6];
        for d in Dimension::ALL {
            out[d.index()] = self.score(Target::Dimension(d))?;
        }
        Some(DimensionScores::new(out))
    }

    pub fn holistic(&self) -> Option<Score> {
        self.score(Target::Holistic)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("score series is empty")]
    EmptySeries,
    #[error("correlation needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("{truths} ground-truth values but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("record {id} has no {target} score")]
    MissingScore { id: String, target: Target },
}

impl MetricError {
    pub fn name(&self) -> &'static str {
        match self {
            MetricError::EmptySeries => "EmptySeries",
            MetricError::TooFewPoints(_) => "TooFewPoints",
            MetricError::LengthMismatch { .. } => "LengthMismatch",
            MetricError::EmptyDataset => "EmptyDataset",
            MetricError::MissingScore { .. } => "MissingScore",
        }
    }
}

/// Paired ground truth and predictions for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    target: Target,
    ids: Vec<String>,
    truths: Vec<f64>,
    predictions: Vec<f64>,
}

impl ScoreSeries {
    /// Builds a series from `(record id, truth, prediction)` triples.
    pub fn from_pairs(target: Target, pairs: impl IntoIterator<Item = (String, f64, f64)>) -> Self {
        let mut series = ScoreSeries {
            target,
            ids: Vec::new(),
            truths: Vec::new(),
            predictions: Vec::new(),
        };
        for (id, t, p) in pairs {
            series.ids.push(id);
            series.truths.push(t);
            series.predictions.push(p);
        }
        series
    }

    /// Builds an unlabelled series; ids are the positions.
    pub fn from_slices(
        target: Target,
        truths: &[f64],
        predictions: &[f64],
    ) -> Result<Self, MetricError> {
        if truths.len() != predictions.len() {
            return Err(MetricError::LengthMismatch {
                truths: truths.len(),
                predictions: predictions.len(),
            });
        }
        Ok(ScoreSeries {
            target,
            ids: (0..truths.len()).map(|i| alloc::format!("{i}")).collect(),
            truths: truths.to_vec(),
            predictions: predictions.to_vec(),
        })
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn len(&self) -> usize {
        self.truths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truths.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn truths(&self) -> &[f64] {
        &self.truths
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.truths
            .iter()
            .copied()
            .zip(self.predictions.iter().copied())
    }
}

/// Mean absolute error.
pub fn mae(series: &ScoreSeries) -> Result<f64, MetricError> {
    if series.is_empty() {
        return Err(MetricError::EmptySeries);
    }
    let total: f64 = series.pairs().map(|(t, p)| libm::fabs(t - p)).sum();
    Ok(total / series.len() as f64)
}

/// Mean squared error.
pub fn mse(series: &ScoreSeries) -> Result<f64, MetricError> {
    if series.is_empty() {
        return Err(MetricError::EmptySeries);
    }
    let total: f64 = series.pairs().map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(total / series.len() as f64)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Pearson correlation. `Ok(None)` when either side has zero variance.
pub fn pcc(series: &ScoreSeries) -> Result<Option<f64>, MetricError> {
    match series.len() {
        0 => return Err(MetricError::EmptySeries),
        n @ 1 => return Err(MetricError::TooFewPoints(n)),
        _ => {}
    }
    if is_constant(&series.truths) || is_constant(&series.predictions) {
        return Ok(None);
    }
    let mt = mean(&series.truths);
    let mp = mean(&series.predictions);
    let (mut cov, mut vt, mut vp) = (0.0, 0.0, 0.0);
    for (t, p) in series.pairs() {
        cov += (t - mt) * (p - mp);
        vt += (t - mt) * (t - mt);
        vp += (p - mp) * (p - mp);
    }
    let denom = libm::sqrt(vt) * libm::sqrt(vp);
    if denom == 0.0 || !denom.is_finite() {
        return Ok(None);
    }
    Ok(Some((cov / denom).clamp(-1.0, 1.0)))
}

/// Standard-deviation estimator for summary statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdEstimator {
    /// n − 1 denominator.
    #[default]
    Sample,
    /// n denominator.
    Population,
}

/// Standard deviation; 0 for a single value.
pub fn std_dev(values: &[f64], estimator: StdEstimator) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    let denom = match estimator {
        StdEstimator::Sample => (n - 1) as f64,
        StdEstimator::Population => n as f64,
    };
    libm::sqrt(ss / denom)
}

/// Agreement of one target's predictions with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: Target,
    pub n: usize,
    /// Mean of the predictions.
    pub mean: f64,
    /// Sample standard deviation of the predictions.
    pub std: f64,
    pub mae: f64,
    pub mse: f64,
    /// Absent when undefined (fewer than two points or zero variance).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcc: Option<f64>,
}

impl TargetMetrics {
    pub fn from_series(series: &ScoreSeries) -> Result<Self, MetricError> {
        let mae = mae(series)?;
        let mse = mse(series)?;
        let pcc = match pcc(series) {
            Ok(r) => r,
            Err(MetricError::TooFewPoints(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(TargetMetrics {
            target: series.target(),
            n: series.len(),
            mean: mean(series.predictions()),
            std: std_dev(series.predictions(), StdEstimator::Sample),
            mae,
            mse,
            pcc,
        })
    }

    /// MAE² ≤ MSE, up to rounding.
    pub fn is_consistent(&self) -> bool {
        self.mae * self.mae <= self.mse + 1e-12
    }
}

/// Run provenance attached to an evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalProvenance {
    pub config_label: String,
    pub run_seed: u64,
    /// Records left out because they belong to the exemplar pool.
    pub excluded_ids: Vec<String>,
    /// Records whose assessment failed; the row is incomplete when non-empty.
    pub failed_ids: Vec<String>,
}

/// Metrics for every target a configuration produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub targets: Vec<TargetMetrics>,
    pub provenance: EvalProvenance,
}

impl EvalResult {
    pub fn from_series(
        series: &[ScoreSeries],
        provenance: EvalProvenance,
    ) -> Result<Self, MetricError> {
        let targets = series
            .iter()
            .map(TargetMetrics::from_series)
            .collect::<Result<_, _>>()?;
        Ok(EvalResult {
            targets,
            provenance,
        })
    }

    pub fn get(&self, target: Target) -> Option<&TargetMetrics> {
        self.targets.iter().find(|m| m.target == target)
    }

    pub fn is_complete(&self) -> bool {
        self.provenance.failed_ids.is_empty()
    }
}

/// Summary of the expert scores for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub target: Target,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Set when n = 1 and the standard deviation is reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub estimator: StdEstimator,
    pub targets: Vec<TargetStats>,
}

impl DatasetStats {
    pub fn get(&self, target: Target) -> Option<&TargetStats> {
        self.targets.iter().find(|s| s.target == target)
    }
}

/// Mean, standard deviation, min and max of the expert scores per target.
pub fn dataset_stats(
    records: &[DatasetRecord],
    estimator: StdEstimator,
) -> Result<DatasetStats, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let mut targets = Vec::with_capacity(7);
    for target in Target::ALL {
        let values = records
            .iter()
            .map(|r| {
                r.score(target)
                    .map(Score::value)
                    .ok_or_else(|| MetricError::MissingScore {
                        id: r.id.clone(),
                        target,
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        targets.push(TargetStats {
            target,
            n: values.len(),
            mean: mean(&values),
            std: std_dev(&values, estimator),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            degenerate: values.len() < 2,
        });
    }
    Ok(DatasetStats { estimator, targets })
}
