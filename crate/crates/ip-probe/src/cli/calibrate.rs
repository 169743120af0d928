//! Empirical validation of the tests against synthetic worlds with known
//! ground truth.
//!
//! Two tracks, two worlds each. The null worlds have no background effect
//! and per-side noise, so the rejection rate estimates the realized
//! type-I error, which should sit near the nominal alpha. The effect
//! worlds shift the treated side by a configured multiple of the noise
//! scale; the rejection rate estimates power.

use serde::{Deserialize, Serialize};

use crate::backends::{
    collect_responses, Backend, CollectOptions, MockBackend, MockEffectConfig, MockResponse,
    NoiseMode, NumericBase, ScalarBase,
};
use crate::metrics::{score_sample, MetricKind, MetricSpec};
use crate::sampling::{PairSkeleton, SideInput};
use crate::stats::{run_pair_test, PermutationParams, SignTestParams};
use crate::core::{PermutationMode, TailMode};

use super::config::{stage_seed, CalibrateConfig};
use super::CliError;

/// Median of |N(0,1)|; used to pin the similarity median of the sign
/// track's null world exactly at m0.
const HALF_NORMAL_MEDIAN: f64 = 0.674_489_750_196_081_7;

/// Empirical rejection rate with a Wilson 95% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSummary {
    pub rejections: u32,
    pub replications: u32,
    pub rate: f64,
    pub ci95: (f64, f64),
}

impl RateSummary {
    fn new(rejections: u32, replications: u32) -> Self {
        let n = f64::from(replications);
        let p = f64::from(rejections) / n;
        let z = 1.96f64;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
        Self {
            rejections,
            replications,
            rate: p,
            ci95: ((center - half).max(0.0), (center + half).min(1.0)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackCalibration {
    pub type_i: RateSummary,
    pub power: RateSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub alpha: f64,
    pub pairs: usize,
    pub sigma: f64,
    pub delta: f64,
    pub m0: f64,
    pub permutation_track: TrackCalibration,
    pub sign_track: TrackCalibration,
}

fn synthetic_skeletons(pairs: usize) -> Vec<PairSkeleton> {
    (0..pairs)
        .map(|k| PairSkeleton {
            semantic_id: format!("cal{k:04}"),
            left: SideInput { background: "base".into(), input_text: format!("probe {k}") },
            right: SideInput { background: "treated".into(), input_text: format!("probe {k}?") },
            gold: None,
        })
        .collect()
}

fn rejects(p_value: f64, alpha: f64) -> bool {
    p_value <= alpha
}

/// One permutation-track replication: interval mock with per-side noise,
/// score paired differences, Monte Carlo permutation test.
fn permutation_replication(
    cfg: &CalibrateConfig,
    alpha: f64,
    effect: f64,
    world_seed: u64,
    test_seed: u64,
    skeletons: &[PairSkeleton],
) -> Result<bool, CliError> {
    let backend = Backend::Mock(MockBackend::new(MockEffectConfig {
        response: MockResponse::Interval(NumericBase { mean: 0.0, sd: cfg.sigma }),
        effect_delta: effect,
        treated: "treated".into(),
        seed: world_seed,
        noise: NoiseMode::PerSide,
    })?);
    let (sample, _) = collect_responses(skeletons, &backend, &CollectOptions::default())?;
    let spec = MetricSpec::new(MetricKind::IntervalDifference)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let series = score_sample(&sample, &spec).map_err(|e| CliError::Validation(e.to_string()))?;
    let params = PermutationParams {
        permutations: cfg.permutations,
        seed: test_seed,
        mode: PermutationMode::Montecarlo,
    };
    let result = run_pair_test(&series, &params, None)
        .map_err(|e| CliError::from_stats("calibration".into(), &e))?;
    Ok(rejects(result.p_value, alpha))
}

/// One sign-track replication: scalar mock on [0, 1] with per-side noise
/// whose scale puts the similarity median exactly at m0 under the null,
/// scalar similarity, one-sided sign test.
fn sign_replication(
    cfg: &CalibrateConfig,
    alpha: f64,
    effect_units: f64,
    world_seed: u64,
    skeletons: &[PairSkeleton],
) -> Result<bool, CliError> {
    // |left - right| = sd * sqrt(2) * |z|, so the median pair distance is
    // sd * sqrt(2) * HALF_NORMAL_MEDIAN; solve for sd at distance 1 - m0.
    let sd = (1.0 - cfg.m0) / (std::f64::consts::SQRT_2 * HALF_NORMAL_MEDIAN);
    let backend = Backend::Mock(MockBackend::new(MockEffectConfig {
        response: MockResponse::Scalar(ScalarBase { mean: 0.5, sd, lo: 0.0, hi: 1.0 }),
        effect_delta: effect_units * sd,
        treated: "treated".into(),
        seed: world_seed,
        noise: NoiseMode::PerSide,
    })?);
    let (sample, _) = collect_responses(skeletons, &backend, &CollectOptions::default())?;
    let spec = MetricSpec::new(MetricKind::ScalarSimilarity)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let series = score_sample(&sample, &spec).map_err(|e| CliError::Validation(e.to_string()))?;
    let params = SignTestParams { m0: cfg.m0, tail: TailMode::Inclusive };
    let result = run_pair_test(&series, &PermutationParams::default(), Some(&params))
        .map_err(|e| CliError::from_stats("calibration".into(), &e))?;
    Ok(rejects(result.p_value, alpha))
}

/// Run all four worlds and summarize rejection rates.
pub fn run_calibration(
    cfg: &CalibrateConfig,
    alpha: f64,
    root_seed: u64,
) -> Result<CalibrationSummary, CliError> {
    if cfg.null_replications == 0 || cfg.effect_replications == 0 {
        return Err(CliError::Config("calibration needs at least one replication".into()));
    }
    if cfg.pairs < 2 {
        return Err(CliError::Config("calibration needs at least two pairs".into()));
    }
    if !(cfg.m0 > 0.0 && cfg.m0 < 1.0) {
        return Err(CliError::Config("calibration m0 must lie in (0, 1)".into()));
    }
    let skeletons = synthetic_skeletons(cfg.pairs);

    let mut perm_null = 0u32;
    for r in 0..cfg.null_replications {
        let world = stage_seed(root_seed, &format!("calibrate:perm:null:{r}"));
        let test = stage_seed(root_seed, &format!("calibrate:perm:null:test:{r}"));
        perm_null += u32::from(permutation_replication(cfg, alpha, 0.0, world, test, &skeletons)?);
    }
    let mut perm_effect = 0u32;
    for r in 0..cfg.effect_replications {
        let world = stage_seed(root_seed, &format!("calibrate:perm:effect:{r}"));
        let test = stage_seed(root_seed, &format!("calibrate:perm:effect:test:{r}"));
        perm_effect += u32::from(permutation_replication(
            cfg,
            alpha,
            cfg.delta * cfg.sigma,
            world,
            test,
            &skeletons,
        )?);
    }

    let mut sign_null = 0u32;
    for r in 0..cfg.null_replications {
        let world = stage_seed(root_seed, &format!("calibrate:sign:null:{r}"));
        sign_null += u32::from(sign_replication(cfg, alpha, 0.0, world, &skeletons)?);
    }
    let mut sign_effect = 0u32;
    for r in 0..cfg.effect_replications {
        let world = stage_seed(root_seed, &format!("calibrate:sign:effect:{r}"));
        sign_effect += u32::from(sign_replication(cfg, alpha, cfg.delta, world, &skeletons)?);
    }

    Ok(CalibrationSummary {
        alpha,
        pairs: cfg.pairs,
        sigma: cfg.sigma,
        delta: cfg.delta,
        m0: cfg.m0,
        permutation_track: TrackCalibration {
            type_i: RateSummary::new(perm_null, cfg.null_replications),
            power: RateSummary::new(perm_effect, cfg.effect_replications),
        },
        sign_track: TrackCalibration {
            type_i: RateSummary::new(sign_null, cfg.null_replications),
            power: RateSummary::new(sign_effect, cfg.effect_replications),
        },
    })
}

pub fn render_summary(summary: &CalibrationSummary) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "calibration against synthetic worlds (alpha = {})", summary.alpha);
    let _ = writeln!(
        out,
        "  pairs per sample: {}, sigma: {}, effect: {} sigma, m0: {}",
        summary.pairs, summary.sigma, summary.delta, summary.m0
    );
    for (name, track) in [
        ("permutation", &summary.permutation_track),
        ("sign", &summary.sign_track),
    ] {
        let _ = writeln!(
            out,
            "  {name} track: type-I {:.4} [{:.4}, {:.4}] over {} null runs; \
             power {:.4} [{:.4}, {:.4}] over {} effect runs",
            track.type_i.rate,
            track.type_i.ci95.0,
            track.type_i.ci95.1,
            track.type_i.replications,
            track.power.rate,
            track.power.ci95.0,
            track.power.ci95.1,
            track.power.replications,
        );
    }
    out
}
