//! One-sided exact sign test for similarity series.
//!
//! Under the null the similarity median sits at the configured threshold,
//! so each score falls below it with probability one half. The count of
//! below-threshold scores is binomial, and the p-value is its exact upper
//! tail. Scores exactly at the threshold carry no directional information
//! and are excluded from the effective sample size.

use crate::core::{BackgroundPair, TailMode, TestMethod, TestParams, TestResult};

use super::binomial::binomial_upper_tail;
use super::{SignTestParams, StatsError};

pub fn sign_test(
    similarities: &[f64],
    params: &SignTestParams,
    background_pair: BackgroundPair,
) -> Result<TestResult, StatsError> {
    params.validate()?;
    for (index, &value) in similarities.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(StatsError::Domain(format!(
                "similarity {value} at index {index} outside [0, 1]"
            )));
        }
    }

    let n_minus = similarities.iter().filter(|&&v| v < params.m0).count() as u64;
    let n_effective = similarities.iter().filter(|&&v| v != params.m0).count() as u64;
    if n_effective == 0 {
        return Err(StatsError::AllTies { m0: params.m0 });
    }

    let p_value = match params.tail {
        TailMode::Inclusive => binomial_upper_tail(n_minus, n_effective, 0.5)?,
        TailMode::Strict => {
            if n_minus == n_effective {
                0.0
            } else {
                binomial_upper_tail(n_minus + 1, n_effective, 0.5)?
            }
        }
    };

    let series_mean = similarities.iter().sum::<f64>() / similarities.len() as f64;
    Ok(TestResult {
        method: TestMethod::Sign,
        statistic: n_minus as f64,
        series_mean,
        p_value,
        params: TestParams::Sign {
            m0: params.m0,
            n: n_effective as usize,
            tail: params.tail,
        },
        background_pair,
        seed: None,
    })
}
