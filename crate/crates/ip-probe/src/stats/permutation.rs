//! Paired permutation test via random sign flips.
//!
//! The observed statistic is the mean paired difference. The null
//! distribution comes from flipping the sign of each difference, either
//! over all 2^n assignments (exhaustive) or over `L` uniform draws
//! (Monte Carlo). Tie handling is two-sided and inclusive: a permuted
//! statistic at least as extreme in absolute value counts toward the tail.
//!
//! Comparisons are performed on |sum| rather than |mean|; the sample size
//! cancels, and skipping the division keeps exhaustive-mode ties exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{
    BackgroundPair, PermutationMode, TestMethod, TestParams, TestResult,
};

use super::{PermutationParams, StatsError};

/// Largest sample size for which exhaustive enumeration is allowed.
pub const EXHAUSTIVE_MAX_N: usize = 20;

pub fn permutation_test(
    differences: &[f64],
    params: &PermutationParams,
    background_pair: BackgroundPair,
) -> Result<TestResult, StatsError> {
    params.validate()?;
    let n = differences.len();
    if n < 2 {
        return Err(StatsError::DegenerateSample { n });
    }
    if let Some(idx) = differences.iter().position(|d| !d.is_finite()) {
        return Err(StatsError::Domain(format!("non-finite difference at index {idx}")));
    }

    let total: f64 = differences.iter().sum();
    let observed_abs = total.abs();
    let statistic = total / n as f64;

    let (p_value, seed) = match params.mode {
        PermutationMode::Exhaustive => {
            if n > EXHAUSTIVE_MAX_N {
                return Err(StatsError::Config(format!(
                    "exhaustive mode supports at most {EXHAUSTIVE_MAX_N} pairs, got {n}"
                )));
            }
            (exhaustive_p(differences, observed_abs), None)
        }
        PermutationMode::Montecarlo => (
            montecarlo_p(differences, total, observed_abs, params.permutations, params.seed),
            Some(params.seed),
        ),
    };

    Ok(TestResult {
        method: TestMethod::Permutation,
        statistic,
        series_mean: statistic,
        p_value,
        params: TestParams::Permutation {
            permutations: params.permutations,
            mode: params.mode,
            n,
        },
        background_pair,
        seed,
    })
}

/// Plain proportion over all 2^n sign assignments. The identity assignment
/// always hits, so p > 0.
fn exhaustive_p(differences: &[f64], observed_abs: f64) -> f64 {
    let n = differences.len();
    let total: u64 = 1 << n;
    let mut hits: u64 = 0;
    for mask in 0..total {
        let mut sum = 0.0;
        for (k, &d) in differences.iter().enumerate() {
            if mask >> k & 1 == 1 {
                sum -= d;
            } else {
                sum += d;
            }
        }
        if sum.abs() >= observed_abs {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Add-one Monte Carlo estimate `(1 + hits) / (L + 1)`, which keeps the
/// p-value strictly positive and the test valid at finite `L`.
fn montecarlo_p(differences: &[f64], total: f64, observed_abs: f64, l: u64, seed: u64) -> f64 {
    let n = differences.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = n.div_ceil(64);
    let last_mask: u64 =
        if n.is_multiple_of(64) { u64::MAX } else { (1u64 << (n % 64)) - 1 };

    let mut hits: u64 = 0;
    for _ in 0..l {
        // Flipping the sign of entry k changes the sum by -2 * d_k.
        let mut flipped = 0.0;
        for w in 0..words {
            let mut bits: u64 = rng.gen();
            if w == words - 1 {
                bits &= last_mask;
            }
            while bits != 0 {
                let k = w * 64 + bits.trailing_zeros() as usize;
                flipped += differences[k];
                bits &= bits - 1;
            }
        }
        let sum = total - 2.0 * flipped;
        if sum.abs() >= observed_abs {
            hits += 1;
        }
    }
    (hits as f64 + 1.0) / (l as f64 + 1.0)
}
