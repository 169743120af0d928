//! Hypothesis-testing core: paired permutation test for difference series,
//! exact sign test for similarity series, and Bonferroni aggregation over
//! all background pairs.

mod binomial;
mod permutation;
mod sign;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::binomial_upper_tail;
pub use permutation::{permutation_test, EXHAUSTIVE_MAX_N};
pub use sign::sign_test;

use crate::core::{
    pair_key, BackgroundSet, MultiTestReport, PermutationMode, ScoreSeries, TailMode, TestResult,
    Track,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate sample: need at least 2 paired differences, got {n}")]
    DegenerateSample { n: usize },
    #[error("every similarity equals the threshold m0 = {m0}; no information")]
    AllTies { m0: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("duplicate test result for background pair {0}")]
    DuplicatePair(String),
    #[error("test result for pair {0} does not match any declared background pair")]
    UnknownPair(String),
}

/// Minimum Monte Carlo permutation count.
pub const MIN_PERMUTATIONS: u64 = 1_000;

/// Default Monte Carlo permutation count.
pub const DEFAULT_PERMUTATIONS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationParams {
    pub permutations: u64,
    pub seed: u64,
    pub mode: PermutationMode,
}

impl PermutationParams {
    pub fn montecarlo(permutations: u64, seed: u64) -> Result<Self, StatsError> {
        let params = Self { permutations, seed, mode: PermutationMode::Montecarlo };
        params.validate()?;
        Ok(params)
    }

    pub fn exhaustive() -> Self {
        Self { permutations: DEFAULT_PERMUTATIONS, seed: 0, mode: PermutationMode::Exhaustive }
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if self.mode == PermutationMode::Montecarlo && self.permutations < MIN_PERMUTATIONS {
            return Err(StatsError::Config(format!(
                "monte carlo mode needs at least {MIN_PERMUTATIONS} permutations, got {}",
                self.permutations
            )));
        }
        Ok(())
    }
}

impl Default for PermutationParams {
    fn default() -> Self {
        Self { permutations: DEFAULT_PERMUTATIONS, seed: 0, mode: PermutationMode::Montecarlo }
    }
}

/// Sign-test parameters. There is no default threshold: the similarity
/// level under the null is application-specific and must be supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestParams {
    pub m0: f64,
    #[serde(default)]
    pub tail: TailMode,
}

impl SignTestParams {
    pub fn new(m0: f64) -> Result<Self, StatsError> {
        let params = Self { m0, tail: TailMode::Inclusive };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        if !(self.m0 > 0.0 && self.m0 <= 1.0) {
            return Err(StatsError::Config(format!(
                "sign-test threshold m0 must lie in (0, 1], got {}",
                self.m0
            )));
        }
        Ok(())
    }
}

/// Dispatch one score series to the test matching its track.
///
/// Difference series go to the permutation test; similarity series go to
/// the sign test and therefore require sign-test parameters.
pub fn run_pair_test(
    series: &ScoreSeries,
    perm: &PermutationParams,
    sign: Option<&SignTestParams>,
) -> Result<TestResult, StatsError> {
    match series.track() {
        Track::Difference => {
            permutation_test(series.values(), perm, series.background_pair().clone())
        }
        Track::Similarity => {
            let sign = sign.ok_or_else(|| {
                StatsError::Config(
                    "similarity series requires a sign-test threshold (m0)".to_string(),
                )
            })?;
            sign_test(series.values(), sign, series.background_pair().clone())
        }
    }
}

/// Combine per-pair test results under a Bonferroni-adjusted threshold.
///
/// The threshold is `alpha / C(|backgrounds|, 2)` regardless of how many
/// results were actually supplied; missing pairs are listed in the report
/// as a warning rather than rejected, so partial audits stay usable.
pub fn bonferroni_aggregate(
    results: Vec<TestResult>,
    backgrounds: &BackgroundSet,
    alpha: f64,
) -> Result<MultiTestReport, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let declared = backgrounds.pairs();
    let adjusted_threshold = alpha / declared.len() as f64;

    let mut per_pair_decisions = BTreeMap::new();
    let mut covered = std::collections::BTreeSet::new();
    for result in &results {
        let key = pair_key(&result.background_pair);
        let unordered_known = declared.iter().any(|(a, b)| {
            (a, b) == (&result.background_pair.0, &result.background_pair.1)
                || (b, a) == (&result.background_pair.0, &result.background_pair.1)
        });
        if !unordered_known {
            return Err(StatsError::UnknownPair(key));
        }
        let canonical = canonical_key(&result.background_pair);
        if !covered.insert(canonical) {
            return Err(StatsError::DuplicatePair(key));
        }
        per_pair_decisions.insert(key, result.p_value <= adjusted_threshold);
    }

    let missing_pairs: Vec<String> = declared
        .iter()
        .filter(|pair| !covered.contains(&canonical_key(pair)))
        .map(pair_key)
        .collect();

    let ip_detected = per_pair_decisions.values().any(|&d| d);
    Ok(MultiTestReport {
        alpha,
        adjusted_threshold,
        results,
        ip_detected,
        per_pair_decisions,
        missing_pairs,
    })
}

fn canonical_key(pair: &(String, String)) -> String {
    if pair.0 <= pair.1 {
        format!("{}|{}", pair.0, pair.1)
    } else {
        format!("{}|{}", pair.1, pair.0)
    }
}
