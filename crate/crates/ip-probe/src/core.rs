//! Shared domain types for the audit pipeline.
//!
//! Everything downstream (sampling, backends, metrics, stats, verdict)
//! speaks in terms of these types. They are immutable after construction
//! and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("background label id must be non-empty")]
    EmptyLabelId,
    #[error("background set needs at least two labels, got {0}")]
    TooFewLabels(usize),
    #[error("duplicate background id `{0}`")]
    DuplicateLabel(String),
    #[error("background id `{0}` is not a member of the background set")]
    UnknownLabel(String),
    #[error("paired sample must contain at least one observation")]
    EmptySample,
    #[error("declared count {declared} does not match {actual} observations")]
    CountMismatch { declared: usize, actual: usize },
    #[error("invalid paired sample:\n{0}")]
    InvalidSample(ValidationReport),
    #[error("invalid response value: {0}")]
    InvalidResponse(String),
    #[error("similarity value {value} at index {index} outside [0, 1]")]
    SimilarityOutOfRange { index: usize, value: f64 },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
}

/// One user-background category, e.g. a dialect community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundLabel {
    pub id: String,
    #[serde(default)]
    pub description: String,
}

impl BackgroundLabel {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Result<Self, CoreError> {
        let id = id.into();
        if id.is_empty() {
            return Err(CoreError::EmptyLabelId);
        }
        Ok(Self { id, description: description.into() })
    }
}

/// Ordered set of background categories under audit.
///
/// The declaration order fixes pair orientation everywhere downstream:
/// for labels `[a, b, c]` the tested pairs are `(a,b)`, `(a,c)`, `(b,c)`
/// with the earlier label always on the left.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct BackgroundSet {
    labels: Vec<BackgroundLabel>,
}

impl BackgroundSet {
    pub fn new(labels: Vec<BackgroundLabel>) -> Result<Self, CoreError> {
        if labels.len() < 2 {
            return Err(CoreError::TooFewLabels(labels.len()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &labels {
            if label.id.is_empty() {
                return Err(CoreError::EmptyLabelId);
            }
            if !seen.insert(label.id.clone()) {
                return Err(CoreError::DuplicateLabel(label.id.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[BackgroundLabel] {
        &self.labels
    }

    pub fn contains(&self, id: &str) -> bool {
        self.labels.iter().any(|l| l.id == id)
    }

    /// Number of unordered pairs, C(|labels|, 2).
    pub fn pair_count(&self) -> usize {
        let n = self.labels.len();
        n * (n - 1) / 2
    }

    /// All unordered pairs in declaration order (left = earlier label).
    pub fn pairs(&self) -> Vec<BackgroundPair> {
        let mut out = Vec::with_capacity(self.pair_count());
        for i in 0..self.labels.len() {
            for j in (i + 1)..self.labels.len() {
                out.push((self.labels[i].id.clone(), self.labels[j].id.clone()));
            }
        }
        out
    }
}

impl<'de> Deserialize<'de> for BackgroundSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let labels = Vec::<BackgroundLabel>::deserialize(deserializer)?;
        BackgroundSet::new(labels).map_err(serde::de::Error::custom)
    }
}

/// An ordered `(left, right)` pair of background ids.
pub type BackgroundPair = (String, String);

/// Canonical string key for a background pair, used in report maps.
pub fn pair_key(pair: &BackgroundPair) -> String {
    format!("{}|{}", pair.0, pair.1)
}

/// A model response, tagged by answer type.
///
/// `Interval` and `Binary` support direct paired differences; the other
/// variants go through a `[0, 1]` similarity metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseValue {
    Interval { value: f64 },
    Choice { option_id: String, option_count: u32 },
    Scalar { value: f64, lo: f64, hi: f64 },
    FreeText { text: String },
    Binary { correct: u8 },
}

impl ResponseValue {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ResponseValue::Interval { .. } => "interval",
            ResponseValue::Choice { .. } => "choice",
            ResponseValue::Scalar { .. } => "scalar",
            ResponseValue::FreeText { .. } => "free_text",
            ResponseValue::Binary { .. } => "binary",
        }
    }

    pub fn same_variant(&self, other: &ResponseValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            ResponseValue::Interval { value } => {
                if !value.is_finite() {
                    return Err(CoreError::InvalidResponse("interval value must be finite".into()));
                }
            }
            ResponseValue::Choice { option_id, option_count } => {
                if *option_count < 2 {
                    return Err(CoreError::InvalidResponse(format!(
                        "choice needs at least 2 options, got {option_count}"
                    )));
                }
                if option_id.is_empty() {
                    return Err(CoreError::InvalidResponse("choice option_id is empty".into()));
                }
            }
            ResponseValue::Scalar { value, lo, hi } => {
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return Err(CoreError::InvalidResponse(format!(
                        "scalar range requires lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if !(lo <= value && value <= hi) {
                    return Err(CoreError::InvalidResponse(format!(
                        "scalar value {value} outside [{lo}, {hi}]"
                    )));
                }
            }
            ResponseValue::FreeText { .. } => {}
            ResponseValue::Binary { correct } => {
                if *correct > 1 {
                    return Err(CoreError::InvalidResponse(format!(
                        "binary correct flag must be 0 or 1, got {correct}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One `(input, response)` observation for a single background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub semantic_id: String,
    pub background: String,
    pub input_text: String,
    pub response: ResponseValue,
}

/// Two observations that share hidden semantics but differ in background.
///
/// Fields are public so partially-built or file-loaded pairs can be
/// inspected; [`PairedSample::new`] is the gate that enforces validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedObservation {
    pub semantic_id: String,
    pub left: Observation,
    pub right: Observation,
}

/// A violation of the paired-observation contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    SemanticIdMismatch,
    SameBackground,
    VariantMismatch,
    OrientationMismatch,
    InvalidResponse,
    EmptyField,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingViolation {
    pub semantic_id: String,
    pub kind: ViolationKind,
    pub detail: String,
}

/// Outcome of mechanically checking a set of pairs; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<PairingViolation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  [{}] {:?}: {}", v.semantic_id, v.kind, v.detail)?;
        }
        Ok(())
    }
}

/// Report every violation of the pairing contract: shared semantic id,
/// distinct backgrounds matching the declared pair orientation, and equal
/// response variants. An empty report means the observations form a valid
/// sample body.
pub fn validate_pairing(
    background_pair: (&str, &str),
    observations: &[PairedObservation],
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |semantic_id: &str, kind: ViolationKind, detail: String| {
        violations.push(PairingViolation { semantic_id: semantic_id.to_string(), kind, detail });
    };

    for obs in observations {
        let id = &obs.semantic_id;
        if id.is_empty() {
            push(id, ViolationKind::EmptyField, "semantic_id is empty".into());
        }
        if obs.left.input_text.is_empty() || obs.right.input_text.is_empty() {
            push(id, ViolationKind::EmptyField, "input_text is empty".into());
        }
        if obs.left.semantic_id != *id || obs.right.semantic_id != *id {
            push(
                id,
                ViolationKind::SemanticIdMismatch,
                format!(
                    "pair id `{}` vs left `{}` / right `{}`",
                    id, obs.left.semantic_id, obs.right.semantic_id
                ),
            );
        }
        if obs.left.background == obs.right.background {
            push(
                id,
                ViolationKind::SameBackground,
                format!("both sides carry background `{}`", obs.left.background),
            );
        }
        if obs.left.background != background_pair.0 || obs.right.background != background_pair.1 {
            push(
                id,
                ViolationKind::OrientationMismatch,
                format!(
                    "expected ({}, {}), found ({}, {})",
                    background_pair.0, background_pair.1, obs.left.background, obs.right.background
                ),
            );
        }
        if !obs.left.response.same_variant(&obs.right.response) {
            push(
                id,
                ViolationKind::VariantMismatch,
                format!(
                    "left is {}, right is {}",
                    obs.left.response.variant_name(),
                    obs.right.response.variant_name()
                ),
            );
        }
        for side in [&obs.left, &obs.right] {
            if let Err(e) = side.response.validate() {
                push(id, ViolationKind::InvalidResponse, e.to_string());
            }
        }
    }
    ValidationReport { violations }
}

/// The collected dataset for one background pair: `n` paired observations
/// sharing semantics and differing only in background.
///
/// Construction is the only path to a value of this type; every invariant
/// (orientation, variant equality, non-emptiness) is checked there, and
/// deserialization routes through the same check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedSample {
    background_pair: BackgroundPair,
    n: usize,
    observations: Vec<PairedObservation>,
}

impl PairedSample {
    pub fn new(
        background_pair: BackgroundPair,
        observations: Vec<PairedObservation>,
    ) -> Result<Self, CoreError> {
        if observations.is_empty() {
            return Err(CoreError::EmptySample);
        }
        if background_pair.0 == background_pair.1 {
            return Err(CoreError::DuplicateLabel(background_pair.0));
        }
        let report =
            validate_pairing((&background_pair.0, &background_pair.1), &observations);
        if !report.is_empty() {
            return Err(CoreError::InvalidSample(report));
        }
        let n = observations.len();
        Ok(Self { background_pair, n, observations })
    }

    pub fn background_pair(&self) -> &BackgroundPair {
        &self.background_pair
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn observations(&self) -> &[PairedObservation] {
        &self.observations
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairedSampleRaw {
    background_pair: BackgroundPair,
    n: usize,
    observations: Vec<PairedObservation>,
}

impl<'de> Deserialize<'de> for PairedSample {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = PairedSampleRaw::deserialize(deserializer)?;
        if raw.n != raw.observations.len() {
            return Err(serde::de::Error::custom(CoreError::CountMismatch {
                declared: raw.n,
                actual: raw.observations.len(),
            }));
        }
        PairedSample::new(raw.background_pair, raw.observations).map_err(serde::de::Error::custom)
    }
}

/// Which comparison scale a score series lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    /// Signed paired differences; tested with the permutation test.
    Difference,
    /// Similarities in `[0, 1]`; tested with the sign test.
    Similarity,
}

/// Per-pair metric outputs for one background pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSeries {
    track: Track,
    background_pair: BackgroundPair,
    values: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(
        track: Track,
        background_pair: BackgroundPair,
        values: Vec<f64>,
    ) -> Result<Self, CoreError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(CoreError::NonFiniteScore(index));
            }
            if track == Track::Similarity && !(0.0..=1.0).contains(&value) {
                return Err(CoreError::SimilarityOutOfRange { index, value });
            }
        }
        Ok(Self { track, background_pair, values })
    }

    pub fn track(&self) -> Track {
        self.track
    }

    pub fn background_pair(&self) -> &BackgroundPair {
        &self.background_pair
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return f64::NAN;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreSeriesRaw {
    track: Track,
    background_pair: BackgroundPair,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for ScoreSeries {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = ScoreSeriesRaw::deserialize(deserializer)?;
        ScoreSeries::new(raw.track, raw.background_pair, raw.values)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Permutation,
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    Montecarlo,
    Exhaustive,
}

/// Which binomial tail the sign test reports.
///
/// `Inclusive` is `P(X >= n_minus)`; `Strict` drops the observed count's
/// own term and is exposed only for replication experiments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    #[default]
    Inclusive,
    Strict,
}

/// Parameters the test was run with, recorded alongside its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestParams {
    Permutation { permutations: u64, mode: PermutationMode, n: usize },
    Sign { m0: f64, n: usize, tail: TailMode },
}

/// One hypothesis test's outcome for one background pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    /// Mean of the score series the test ran on. Equal to `statistic`
    /// for the permutation test; for the sign test it reports the mean
    /// similarity alongside the below-threshold count.
    pub series_mean: f64,
    pub p_value: f64,
    pub params: TestParams,
    pub background_pair: BackgroundPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// All pairwise tests plus the Bonferroni-adjusted decision.
///
/// Built by `stats::bonferroni_aggregate`, which guarantees
/// `adjusted_threshold == alpha / C(|backgrounds|, 2)` and
/// `ip_detected == any(p <= adjusted_threshold)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiTestReport {
    pub alpha: f64,
    pub adjusted_threshold: f64,
    pub results: Vec<TestResult>,
    pub ip_detected: bool,
    pub per_pair_decisions: BTreeMap<String, bool>,
    /// Declared pairs with no test result; a partial audit, not an error.
    #[serde(default)]
    pub missing_pairs: Vec<String>,
}
