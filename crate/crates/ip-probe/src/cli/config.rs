//! Declarative run configuration.
//!
//! A run is one JSON file plus optional flag overrides (flags win).
//! Parsing is strict: unknown keys anywhere are rejected. Input paths are
//! resolved relative to the config file so a config travels with its
//! data; the output directory is resolved relative to the working
//! directory of the invocation.
//!
//! All pipeline randomness flows from the single root `seed`, split per
//! stage by hashing the stage name with the root seed (see
//! [`stage_seed`]). The mock backend's own `seed` is part of the
//! synthetic world definition and is configured explicitly.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::backends::BackendConfig;
use crate::core::{BackgroundSet, TailMode};
use crate::metrics::MetricKind;
use crate::verdict::EthicsConfig;

use super::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backgrounds: BackgroundSet,
    pub pool: PathBuf,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// Which backgrounds the lexicon's two columns belong to; defaults to
    /// the first two declared backgrounds in order.
    #[serde(default)]
    pub lexicon_sides: Option<(String, String)>,
    /// Background the transferred (right) side should carry. Optional
    /// with exactly two backgrounds: the one that is not the pool's.
    #[serde(default)]
    pub target_background: Option<String>,
    pub backend: BackendConfig,
    pub metric: MetricConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub permutations: PermutationConfig,
    #[serde(default)]
    pub m0: Option<f64>,
    #[serde(default)]
    pub tail: TailMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub ethics: EthicsConfig,
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    #[serde(default)]
    pub judge: Option<JudgeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeConfig {
    /// Offline fallback: Jaccard overlap of lowercase word tokens.
    TokenJaccard,
    Remote(RemoteJudgeConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteJudgeConfig {
    pub endpoint: String,
    pub auth_env: String,
    /// Prompt with `{text_a}` and `{text_b}` slots.
    pub prompt_template: String,
    pub native_lo: f64,
    pub native_hi: f64,
    #[serde(default = "default_judge_tolerance")]
    pub tolerance: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

fn default_judge_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationConfig {
    #[serde(default = "default_permutation_count")]
    pub count: u64,
    #[serde(default = "default_permutation_mode")]
    pub mode: crate::core::PermutationMode,
}

fn default_permutation_count() -> u64 {
    crate::stats::DEFAULT_PERMUTATIONS
}

fn default_permutation_mode() -> crate::core::PermutationMode {
    crate::core::PermutationMode::Montecarlo
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self { count: default_permutation_count(), mode: default_permutation_mode() }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub fail_fast: bool,
}

fn default_concurrency() -> usize {
    1
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { concurrency: 1, fail_fast: false }
    }
}

/// Synthetic-world parameters for the `calibrate` command.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    #[serde(default = "default_null_replications")]
    pub null_replications: u32,
    #[serde(default = "default_effect_replications")]
    pub effect_replications: u32,
    #[serde(default = "default_calibrate_pairs")]
    pub pairs: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Effect size for the power worlds, in units of sigma.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_calibrate_permutations")]
    pub permutations: u64,
    #[serde(default = "default_calibrate_m0")]
    pub m0: f64,
}

fn default_null_replications() -> u32 {
    500
}
fn default_effect_replications() -> u32 {
    200
}
fn default_calibrate_pairs() -> usize {
    100
}
fn default_sigma() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    1.0
}
fn default_calibrate_permutations() -> u64 {
    2_000
}
fn default_calibrate_m0() -> f64 {
    0.9
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            null_replications: default_null_replications(),
            effect_replications: default_effect_replications(),
            pairs: default_calibrate_pairs(),
            sigma: default_sigma(),
            delta: default_delta(),
            permutations: default_calibrate_permutations(),
            m0: default_calibrate_m0(),
        }
    }
}

/// Flag overrides; every field beats its config counterpart when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub m0: Option<f64>,
    pub permutations: Option<u64>,
    pub tail: Option<TailMode>,
    pub subsample: Option<usize>,
    pub fail_fast: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Load, apply overrides, resolve paths, and validate.
    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(config_path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", config_path.display()))
        })?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("cannot parse config {}: {e}", config_path.display()))
        })?;

        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(alpha) = overrides.alpha {
            config.alpha = alpha;
        }
        if let Some(m0) = overrides.m0 {
            config.m0 = Some(m0);
        }
        if let Some(count) = overrides.permutations {
            config.permutations.count = count;
        }
        if let Some(tail) = overrides.tail {
            config.tail = tail;
        }
        if let Some(subsample) = overrides.subsample {
            config.subsample = Some(subsample);
        }
        if overrides.fail_fast {
            config.collect.fail_fast = true;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }

        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        config.pool = resolve(base, &config.pool);
        if let Some(lexicon) = &config.lexicon {
            config.lexicon = Some(resolve(base, lexicon));
        }

        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !self.pool.exists() {
            return Err(CliError::Config(format!(
                "pool file does not exist: {}",
                self.pool.display()
            )));
        }
        if let Some(lexicon) = &self.lexicon {
            if !lexicon.exists() {
                return Err(CliError::Config(format!(
                    "lexicon file does not exist: {}",
                    lexicon.display()
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(m0) = self.m0 {
            if !(m0 > 0.0 && m0 <= 1.0) {
                return Err(CliError::Config(format!("m0 must lie in (0, 1], got {m0}")));
            }
        }
        if self.metric.kind.track() == crate::core::Track::Similarity && self.m0.is_none() {
            return Err(CliError::Config(
                "similarity-track metrics need a sign-test threshold: set m0 in the config \
                 or pass --m0"
                    .into(),
            ));
        }
        if self.metric.kind == MetricKind::JudgedTextSimilarity && self.metric.judge.is_none() {
            return Err(CliError::Config(
                "judged_text_similarity needs a judge section".into(),
            ));
        }
        if let Some(target) = &self.target_background {
            if !self.backgrounds.contains(target) {
                return Err(CliError::Config(format!(
                    "target background `{target}` is not in the background set"
                )));
            }
        }
        if let Some((a, b)) = &self.lexicon_sides {
            if !self.backgrounds.contains(a) || !self.backgrounds.contains(b) {
                return Err(CliError::Config(
                    "lexicon_sides must name declared backgrounds".into(),
                ));
            }
        }
        self.ethics.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// The two lexicon column backgrounds, defaulting to the first two
    /// declared backgrounds in order.
    pub fn lexicon_sides(&self) -> (String, String) {
        match &self.lexicon_sides {
            Some((a, b)) => (a.clone(), b.clone()),
            None => {
                let labels = self.backgrounds.labels();
                (labels[0].id.clone(), labels[1].id.clone())
            }
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Deterministic per-stage seed: the stage name hashed with the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(b":");
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Conventional artifact paths under the output directory.
#[derive(Debug, Clone)]
pub struct OutPaths {
    pub skeletons: PathBuf,
    pub sample: PathBuf,
    pub manifest: PathBuf,
    pub series: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub calibration: PathBuf,
}

impl OutPaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            skeletons: out_dir.join("skeletons.jsonl"),
            sample: out_dir.join("sample.json"),
            manifest: out_dir.join("manifest.jsonl"),
            series: out_dir.join("series.json"),
            report_json: out_dir.join("report.json"),
            report_text: out_dir.join("report.txt"),
            calibration: out_dir.join("calibration.json"),
        }
    }
}

/// Provenance-grade content hash of a file.
pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.json");
        std::fs::write(&path, body).unwrap();
        path
    }

    fn minimal_config_body(pool: &str) -> String {
        format!(
            r#"{{
  "backgrounds": [
    {{"id": "am_en", "description": "a"}},
    {{"id": "br_en", "description": "b"}}
  ],
  "pool": "{pool}",
  "backend": {{"mock": {{
    "response": {{"interval": {{"mean": 5.0, "sd": 1.0}}}},
    "effect_delta": 1.0,
    "treated": "br_en",
    "seed": 11
  }}}},
  "metric": {{"kind": "interval_difference"}},
  "seed": 7,
  "out_dir": "out",
  "ethics": {{
    "application_id": "toy",
    "ip_is_ethical": true,
    "rationale": "demo"
  }}
}}"#
        )
    }

    #[test]
    fn loads_minimal_config_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("pool.jsonl"),
            r#"{"semantic_id":"q1","background":"am_en","input_text":"x"}"#,
        )
        .unwrap();
        let path = write_config(dir.path(), &minimal_config_body("pool.jsonl"));
        let config = RunConfig::load(&path, &Overrides::default()).unwrap();
        assert_eq!(config.alpha, 0.05);
        assert_eq!(config.permutations.count, 10_000);
        assert_eq!(config.collect.concurrency, 1);
        assert_eq!(config.calibrate.null_replications, 500);
        assert!(config.pool.is_absolute() || config.pool.starts_with(dir.path()));
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pool.jsonl"), "").unwrap();
        let body = minimal_config_body("pool.jsonl").replace("\"seed\": 7", "\"seed\": 7, \"zzz\": 1");
        let path = write_config(dir.path(), &body);
        let err = RunConfig::load(&path, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("zzz"), "{err}");
    }

    #[test]
    fn rejects_missing_pool() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), &minimal_config_body("absent.jsonl"));
        let err = RunConfig::load(&path, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn similarity_metric_requires_m0() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pool.jsonl"), "").unwrap();
        let body = minimal_config_body("pool.jsonl")
            .replace("interval_difference", "scalar_similarity");
        let path = write_config(dir.path(), &body);
        let err = RunConfig::load(&path, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("m0"));
        let config =
            RunConfig::load(&path, &Overrides { m0: Some(0.9), ..Default::default() }).unwrap();
        assert_eq!(config.m0, Some(0.9));
    }

    #[test]
    fn overrides_beat_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pool.jsonl"), "").unwrap();
        let path = write_config(dir.path(), &minimal_config_body("pool.jsonl"));
        let overrides = Overrides {
            seed: Some(99),
            alpha: Some(0.01),
            permutations: Some(5_000),
            out: Some(PathBuf::from("/tmp/elsewhere")),
            ..Default::default()
        };
        let config = RunConfig::load(&path, &overrides).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.alpha, 0.01);
        assert_eq!(config.permutations.count, 5_000);
        assert_eq!(config.out_dir, PathBuf::from("/tmp/elsewhere"));
    }

    #[test]
    fn stage_seeds_differ_by_stage_and_root() {
        assert_ne!(stage_seed(7, "pair"), stage_seed(7, "collect"));
        assert_ne!(stage_seed(7, "pair"), stage_seed(8, "pair"));
        assert_eq!(stage_seed(7, "pair"), stage_seed(7, "pair"));
    }
}
