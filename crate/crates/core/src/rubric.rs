//! Assessment dimensions, the 0–10 score scale and aggregation weights.

use alloc::collections::BTreeMap;
use core::fmt;
use core::ops::Index;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Lower bound of the score scale.
pub const SCORE_MIN: f64 = 0.0;
/// Upper bound of the score scale.
pub const SCORE_MAX: f64 = 10.0;

/// Weight sums may drift from 1 by at most this much.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One of the six fine-grained assessment dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Structure,
    Logic,
    Originality,
    Writing,
    Proficiency,
    Rigor,
}

impl Dimension {
    /// All dimensions in canonical order.
    pub const ALL: [Dimension; 6] = [
        Dimension::Structure,
        Dimension::Logic,
        Dimension::Originality,
        Dimension::Writing,
        Dimension::Proficiency,
        Dimension::Rigor,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// Display name, e.g. `Structure`.
    pub const fn name(self) -> &'static str {
        match self {
            Dimension::Structure => "Structure",
            Dimension::Logic => "Logic",
            Dimension::Originality => "Originality",
            Dimension::Writing => "Writing",
            Dimension::Proficiency => "Proficiency",
            Dimension::Rigor => "Rigor",
        }
    }

    /// Key used in JSON objects and config files, e.g. `structure`.
    pub const fn key(self) -> &'static str {
        match self {
            Dimension::Structure => "structure",
            Dimension::Logic => "logic",
            Dimension::Originality => "originality",
            Dimension::Writing => "writing",
            Dimension::Proficiency => "proficiency",
            Dimension::Rigor => "rigor",
        }
    }

    /// Case-insensitive lookup by name or key.
    pub fn from_name(name: &str) -> Option<Dimension> {
        let name = name.trim();
        Dimension::ALL
            .into_iter()
            .find(|d| d.key().eq_ignore_ascii_case(name))
    }

    /// Short prompt-facing definition. Never mentions another dimension by name.
    pub const fn definition(self) -> &'static str {
        match self {
            Dimension::Structure => {
                "How the thesis is organized: whether chapters follow a clear order and each section builds on the one before it."
            }
            Dimension::Logic => {
                "How well the argument holds together: research questions, methods, evidence and conclusions should align, and each claim should follow from what precedes it."
            }
            Dimension::Originality => {
                "The novelty of the work: fresh perspectives, new questions, or inventive use of theory or method rather than a restatement of existing ideas."
            }
            Dimension::Writing => {
                "The quality of the prose: clarity, grammatical accuracy, an academic tone free of colloquialisms, and the conventions of the discipline."
            }
            Dimension::Proficiency => {
                "Command of disciplinary knowledge: correct understanding and application of course concepts, terminology, methods and tools to the problem at hand."
            }
            Dimension::Rigor => {
                "Adherence to scholarly standards: reliable sources, accurate and consistently formatted citations, and compliance with academic ethics."
            }
        }
    }

    /// The aspects an examiner checks for this dimension.
    pub const fn aspects(self) -> &'static str {
        match self {
            Dimension::Structure => {
                "organization of chapters; coherence across sections; smooth transitions"
            }
            Dimension::Logic => {
                "consistency among research questions, methodology, and conclusions; clarity of reasoning and argument"
            }
            Dimension::Originality => {
                "original perspectives; novel research questions; theoretical or methodological innovation"
            }
            Dimension::Writing => {
                "clarity; grammatical accuracy; academic tone; adherence to disciplinary conventions"
            }
            Dimension::Proficiency => {
                "application of course knowledge; use of technical terminology; problem-solving skills with disciplinary understanding; use of field-specific tools"
            }
            Dimension::Rigor => {
                "source reliability; citation accuracy and format; compliance with academic ethics"
            }
        }
    }

    /// Core indicators carry more weight than supporting ones in the core-weighted preset.
    pub const fn is_core(self) -> bool {
        matches!(
            self,
            Dimension::Structure | Dimension::Logic | Dimension::Originality | Dimension::Writing
        )
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("score {0} is outside the 0-10 scale")]
pub struct ScoreOutOfRange(pub f64);

/// A rating on the closed 0–10 scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Score, ScoreOutOfRange> {
        if (SCORE_MIN..=SCORE_MAX).contains(&value) {
            Ok(Score(value))
        } else {
            Err(ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Score {
    type Error = ScoreOutOfRange;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Score::new(value)
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Score::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.0)
    }
}

/// One score per dimension, indexed by [`Dimension`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionScores([Score; 6]);

impl DimensionScores {
    pub fn new(scores: [Score; 6]) -> Self {
        DimensionScores(scores)
    }

    /// Validates raw values given in [`Dimension::ALL`] order.
    pub fn from_values(values: [f64; 6]) -> Result<Self, ScoreOutOfRange> {
        let mut out = [Score(0.0); 6];
        for (slot, v) in out.iter_mut().zip(values) {
            *slot = Score::new(v)?;
        }
        Ok(DimensionScores(out))
    }

    pub fn values(&self) -> [f64; 6] {
        self.0.map(Score::value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Dimension, Score)> + '_ {
        Dimension::ALL.into_iter().zip(self.0.iter().copied())
    }
}

impl Index<Dimension> for DimensionScores {
    type Output = Score;

    fn index(&self, d: Dimension) -> &Score {
        &self.0[d.index()]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WeightError {
    #[error("weight for {dimension} is {value}, expected a value in [0, 1]")]
    WeightOutOfRange { dimension: Dimension, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    WeightsDoNotSumToOne { sum: f64 },
    #[error("no weight given for {0}")]
    MissingDimension(Dimension),
}

/// Aggregation weights over the six dimensions; each in [0,1], summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightProfile([f64; 6]);

impl WeightProfile {
    /// Every dimension weighted 1/6.
    pub fn uniform() -> Self {
        WeightProfile([1.0 / 6.0; 6])
    }

    /// Core indicators (Structure, Logic, Originality, Writing) at 0.2 and
    /// supporting indicators (Proficiency, Rigor) at 0.1.
    pub fn core_weighted() -> Self {
        WeightProfile(Dimension::ALL.map(|d| if d.is_core() { 0.2 } else { 0.1 }))
    }

    /// Validates a full dimension → weight map.
    ///
    /// A sum within [`WEIGHT_SUM_TOLERANCE`] of 1 but off by more than a few
    /// ulps is renormalized, so the stored profile sums to 1 to machine precision.
    pub fn custom(weights: &BTreeMap<Dimension, f64>) -> Result<Self, WeightError> {
        let mut out = [0.0; 6];
        for d in Dimension::ALL {
            let w = *weights.get(&d).ok_or(WeightError::MissingDimension(d))?;
            if !(0.0..=1.0).contains(&w) {
                return Err(WeightError::WeightOutOfRange {
                    dimension: d,
                    value: w,
                });
            }
            out[d.index()] = w;
        }
        let sum: f64 = out.iter().sum();
        if libm::fabs(sum - 1.0) > WEIGHT_SUM_TOLERANCE {
            return Err(WeightError::WeightsDoNotSumToOne { sum });
        }
        if libm::fabs(sum - 1.0) > 1e-12 {
            for w in &mut out {
                *w /= sum;
            }
        }
        Ok(WeightProfile(out))
    }

    /// Builds a profile from values in [`Dimension::ALL`] order.
    pub fn from_values(values: [f64; 6]) -> Result<Self, WeightError> {
        let map = Dimension::ALL.into_iter().zip(values).collect();
        WeightProfile::custom(&map)
    }

    pub fn weight(&self, d: Dimension) -> f64 {
        self.0[d.index()]
    }

    pub fn values(&self) -> [f64; 6] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn to_map(&self) -> BTreeMap<Dimension, f64> {
        Dimension::ALL.into_iter().zip(self.0).collect()
    }
}

impl Default for WeightProfile {
    fn default() -> Self {
        WeightProfile::uniform()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatWeights {
    structure: Option<f64>,
    logic: Option<f64>,
    originality: Option<f64>,
    writing: Option<f64>,
    proficiency: Option<f64>,
    rigor: Option<f64>,
}

impl Serialize for WeightProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let [s, l, o, w, p, r] = self.0.map(Some);
        FlatWeights {
            structure: s,
            logic: l,
            originality: o,
            writing: w,
            proficiency: p,
            rigor: r,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let flat = FlatWeights::deserialize(deserializer)?;
        let entries = [
            flat.structure,
            flat.logic,
            flat.originality,
            flat.writing,
            flat.proficiency,
            flat.rigor,
        ];
        let map: BTreeMap<Dimension, f64> = Dimension::ALL
            .into_iter()
            .zip(entries)
            .filter_map(|(d, w)| w.map(|w| (d, w)))
            .collect();
        WeightProfile::custom(&map).map_err(serde::de::Error::custom)
    }
}
