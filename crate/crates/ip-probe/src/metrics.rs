//! Maps paired responses to a score series: signed differences for
//! interval-type responses, similarities in `[0, 1]` otherwise.
//!
//! Sign convention for both difference metrics: positive means the left
//! side of the pair scored higher.

use thiserror::Error;

use crate::core::{
    CoreError, PairedObservation, PairedSample, ResponseValue, ScoreSeries, Track,
};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("pair `{semantic_id}`: expected {expected} responses, found {found}")]
    VariantMismatch { semantic_id: String, expected: &'static str, found: String },
    #[error("pair `{semantic_id}`: choice option counts differ ({left} vs {right})")]
    OptionCountMismatch { semantic_id: String, left: u32, right: u32 },
    #[error("pair `{semantic_id}`: scalar ranges differ or are degenerate")]
    RangeMismatch { semantic_id: String },
    #[error("judge error: {0}")]
    Judge(String),
    #[error("judge returned {raw}, outside its declared range [{lo}, {hi}] (tolerance {tol})")]
    JudgeRange { raw: f64, lo: f64, hi: f64, tol: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Which metric to apply to a sample; must match its response variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    IntervalDifference,
    ChoiceSimilarity,
    ScalarSimilarity,
    JudgedTextSimilarity,
    BinaryDifference,
}

impl MetricKind {
    pub fn track(self) -> Track {
        match self {
            MetricKind::IntervalDifference | MetricKind::BinaryDifference => Track::Difference,
            _ => Track::Similarity,
        }
    }

}

/// A metric plus the judge it needs, if any.
pub struct MetricSpec {
    pub kind: MetricKind,
    pub judge: Option<Box<dyn TextJudge>>,
}

impl MetricSpec {
    pub fn new(kind: MetricKind) -> Result<Self, MetricError> {
        if kind == MetricKind::JudgedTextSimilarity {
            return Err(MetricError::Config(
                "judged_text_similarity requires a judge; use with_judge".into(),
            ));
        }
        Ok(Self { kind, judge: None })
    }

    pub fn with_judge(kind: MetricKind, judge: Box<dyn TextJudge>) -> Self {
        Self { kind, judge: Some(judge) }
    }
}

/// Scores a pair of free-text responses on a declared native range.
pub trait TextJudge: Send + Sync {
    /// `(lo, hi)` of the raw scores this judge emits.
    fn native_range(&self) -> (f64, f64);

    /// Slack allowed outside the native range before a score is an error.
    fn range_tolerance(&self) -> f64 {
        1e-9
    }

    fn raw_score(&self, a: &str, b: &str) -> Result<f64, JudgeError>;
}

#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct JudgeError(pub String);

/// Deterministic fallback judge: Jaccard overlap of lowercase word tokens.
/// Identical texts score 1, disjoint vocabularies score 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenJaccardJudge;

impl TokenJaccardJudge {
    fn tokens(text: &str) -> std::collections::BTreeSet<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect()
    }
}

impl TextJudge for TokenJaccardJudge {
    fn native_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn raw_score(&self, a: &str, b: &str) -> Result<f64, JudgeError> {
        let ta = Self::tokens(a);
        let tb = Self::tokens(b);
        if ta.is_empty() && tb.is_empty() {
            return Ok(1.0);
        }
        let intersection = ta.intersection(&tb).count() as f64;
        let union = ta.union(&tb).count() as f64;
        Ok(intersection / union)
    }
}

fn variant_mismatch(
    pair: &PairedObservation,
    expected: &'static str,
) -> MetricError {
    let found = if pair.left.response.variant_name() != expected {
        pair.left.response.variant_name()
    } else {
        pair.right.response.variant_name()
    };
    MetricError::VariantMismatch {
        semantic_id: pair.semantic_id.clone(),
        expected,
        found: found.to_string(),
    }
}

/// Signed difference between two interval responses: left minus right.
pub fn interval_difference(pair: &PairedObservation) -> Result<f64, MetricError> {
    match (&pair.left.response, &pair.right.response) {
        (ResponseValue::Interval { value: l }, ResponseValue::Interval { value: r }) => Ok(l - r),
        _ => Err(variant_mismatch(pair, "interval")),
    }
}

/// Correctness gap in percentage points: `100 * (left - right)`, so the
/// possible values are -100, 0, and +100, and a positive mean reads as
/// "the left side answered correctly more often".
pub fn binary_difference(pair: &PairedObservation) -> Result<f64, MetricError> {
    match (&pair.left.response, &pair.right.response) {
        (ResponseValue::Binary { correct: l }, ResponseValue::Binary { correct: r }) => {
            Ok(100.0 * (f64::from(*l) - f64::from(*r)))
        }
        _ => Err(variant_mismatch(pair, "binary")),
    }
}

/// Exact-agreement similarity for multiple choice: 1 if the chosen options
/// match, else 0.
pub fn choice_similarity(pair: &PairedObservation) -> Result<f64, MetricError> {
    match (&pair.left.response, &pair.right.response) {
        (
            ResponseValue::Choice { option_id: l, option_count: lc },
            ResponseValue::Choice { option_id: r, option_count: rc },
        ) => {
            if lc != rc {
                return Err(MetricError::OptionCountMismatch {
                    semantic_id: pair.semantic_id.clone(),
                    left: *lc,
                    right: *rc,
                });
            }
            Ok(if l == r { 1.0 } else { 0.0 })
        }
        _ => Err(variant_mismatch(pair, "choice")),
    }
}

/// Range-normalized closeness of two bounded scalars sharing a scale:
/// `1 - |a - b| / (hi - lo)`.
pub fn scalar_similarity(pair: &PairedObservation) -> Result<f64, MetricError> {
    match (&pair.left.response, &pair.right.response) {
        (
            ResponseValue::Scalar { value: a, lo: alo, hi: ahi },
            ResponseValue::Scalar { value: b, lo: blo, hi: bhi },
        ) => {
            if alo != blo || ahi != bhi || alo.is_nan() || alo >= ahi {
                return Err(MetricError::RangeMismatch { semantic_id: pair.semantic_id.clone() });
            }
            Ok(1.0 - (a - b).abs() / (ahi - alo))
        }
        _ => Err(variant_mismatch(pair, "scalar")),
    }
}

/// Similarity of two free-text responses through a judge, rescaled
/// affinely from the judge's native range to `[0, 1]` and clamped.
pub fn judged_text_similarity(
    pair: &PairedObservation,
    judge: &dyn TextJudge,
) -> Result<f64, MetricError> {
    match (&pair.left.response, &pair.right.response) {
        (ResponseValue::FreeText { text: a }, ResponseValue::FreeText { text: b }) => {
            let raw = judge.raw_score(a, b).map_err(|e| MetricError::Judge(e.0))?;
            let (lo, hi) = judge.native_range();
            let tol = judge.range_tolerance();
            if !(lo - tol..=hi + tol).contains(&raw) || raw.is_nan() {
                return Err(MetricError::JudgeRange { raw, lo, hi, tol });
            }
            Ok(((raw - lo) / (hi - lo)).clamp(0.0, 1.0))
        }
        _ => Err(variant_mismatch(pair, "free_text")),
    }
}

/// Score every pair in a sample, in order. The first mismatching pair
/// aborts the whole run with its semantic id.
pub fn score_sample(sample: &PairedSample, spec: &MetricSpec) -> Result<ScoreSeries, MetricError> {
    let judge = match spec.kind {
        MetricKind::JudgedTextSimilarity => Some(
            spec.judge
                .as_deref()
                .ok_or_else(|| MetricError::Config("judged_text_similarity needs a judge".into()))?,
        ),
        _ => None,
    };
    let mut values = Vec::with_capacity(sample.n());
    for pair in sample.observations() {
        let value = match spec.kind {
            MetricKind::IntervalDifference => interval_difference(pair)?,
            MetricKind::BinaryDifference => binary_difference(pair)?,
            MetricKind::ChoiceSimilarity => choice_similarity(pair)?,
            MetricKind::ScalarSimilarity => scalar_similarity(pair)?,
            MetricKind::JudgedTextSimilarity => {
                judged_text_similarity(pair, judge.expect("judge checked above"))?
            }
        };
        values.push(value);
    }
    Ok(ScoreSeries::new(spec.kind.track(), sample.background_pair().clone(), values)?)
}
