//! The model-under-test contract: map an input text to a response.
//!
//! Two implementations ship here. The mock is a synthetic world whose
//! causal effect of background on response is known exactly, used to
//! validate the statistics end to end. The remote client drives any
//! HTTP service that accepts a prompt and returns text.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::core::{CoreError, Observation, PairedObservation, PairedSample, ResponseValue};
use crate::sampling::PairSkeleton;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("remote request failed with status {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("remote transport error: {0}")]
    Transport(String),
    #[error("cannot parse remote reply as {expected}: {detail}")]
    Parse { expected: &'static str, detail: String },
    #[error("rating hook failed for `{semantic_id}`: {detail}")]
    Rating { semantic_id: String, detail: String },
    #[error("no skeletons to collect; a sample needs at least one pair")]
    EmptySample,
    #[error("every item was dropped; nothing to test")]
    AllDropped { manifest: Vec<ManifestEntry> },
    #[error("skeleton `{0}` does not match the background pair of the batch")]
    PairingError(String),
    #[error(transparent)]
    InvalidSample(#[from] CoreError),
}

/// Backend selection plus its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendConfig {
    Mock(MockEffectConfig),
    Remote(RemoteConfig),
}

impl BackendConfig {
    pub fn name(&self) -> &'static str {
        match self {
            BackendConfig::Mock(_) => "mock",
            BackendConfig::Remote(_) => "remote",
        }
    }
}

/// How the mock's base draw is keyed.
///
/// `Shared` gives both sides of a pair the same draw, so with a zero
/// effect the paired responses are exactly equal and every difference is
/// exactly the effect size. `PerSide` keys the draw by background too,
/// which makes the null stochastic; calibration uses this mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Shared,
    PerSide,
}

/// A synthetic responder with a known causal effect: the base response
/// depends only on the hidden semantics, and `effect_delta` is added
/// exactly when the inferred background equals `treated`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEffectConfig {
    pub response: MockResponse,
    pub effect_delta: f64,
    pub treated: String,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockResponse {
    Interval(NumericBase),
    Scalar(ScalarBase),
    Choice(ChoiceBase),
    Binary(BinaryBase),
    FreeText(FreeTextBase),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericBase {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarBase {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceBase {
    pub option_count: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryBase {
    pub correct_prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeTextBase {
    pub text: String,
    /// Returned instead of `text` when the background is treated and the
    /// effect is nonzero; an additive shift has no meaning for text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treated_text: Option<String>,
}

impl MockEffectConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.treated.is_empty() {
            return Err(BackendError::Config("mock treated background id is empty".into()));
        }
        match &self.response {
            MockResponse::Interval(base) => {
                if base.sd < 0.0 {
                    return Err(BackendError::Config("mock sd must be non-negative".into()));
                }
            }
            MockResponse::Scalar(base) => {
                if base.sd < 0.0 {
                    return Err(BackendError::Config("mock sd must be non-negative".into()));
                }
                if base.lo.is_nan() || base.hi.is_nan() || base.lo >= base.hi {
                    return Err(BackendError::Config(format!(
                        "mock scalar range requires lo < hi, got [{}, {}]",
                        base.lo, base.hi
                    )));
                }
            }
            MockResponse::Choice(base) => {
                if base.option_count < 2 {
                    return Err(BackendError::Config("mock choice needs >= 2 options".into()));
                }
            }
            MockResponse::Binary(base) => {
                let q0 = base.correct_prob;
                let q1 = q0 + self.effect_delta;
                if !(0.0..=1.0).contains(&q0) || !(0.0..=1.0).contains(&q1) {
                    return Err(BackendError::Config(format!(
                        "mock binary probabilities must stay in [0, 1]: base {q0}, treated {q1}"
                    )));
                }
            }
            MockResponse::FreeText(_) => {}
        }
        Ok(())
    }
}

/// Derive a per-item RNG seed from the run seed, the semantic id, and
/// (in per-side mode) the background. SHA-256 keeps the derivation stable
/// across platforms and releases.
fn derive_item_seed(seed: u64, semantic_id: &str, side: Option<&str>) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(semantic_id.as_bytes());
    if let Some(side) = side {
        hasher.update([0x1f]);
        hasher.update(side.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    config: MockEffectConfig,
}

impl MockBackend {
    pub fn new(config: MockEffectConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Deterministic given (seed, semantic_id, background_hint). The hint
    /// plays the role of the background the model would infer from the
    /// input; the mock takes it explicitly so the ground truth stays exact.
    pub fn query(&self, background_hint: &str, semantic_id: &str) -> ResponseValue {
        let cfg = &self.config;
        let side = match cfg.noise {
            NoiseMode::Shared => None,
            NoiseMode::PerSide => Some(background_hint),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_item_seed(cfg.seed, semantic_id, side));
        let treated = background_hint == cfg.treated;
        let shift = if treated { cfg.effect_delta } else { 0.0 };
        match &cfg.response {
            MockResponse::Interval(base) => {
                let z: f64 = rng.sample(StandardNormal);
                ResponseValue::Interval { value: base.mean + base.sd * z + shift }
            }
            MockResponse::Scalar(base) => {
                let z: f64 = rng.sample(StandardNormal);
                let value = (base.mean + base.sd * z + shift).clamp(base.lo, base.hi);
                ResponseValue::Scalar { value, lo: base.lo, hi: base.hi }
            }
            MockResponse::Choice(base) => {
                let base_index = rng.gen_range(0..base.option_count) as i64;
                let offset = if treated { cfg.effect_delta.round() as i64 } else { 0 };
                let index = (base_index + offset).rem_euclid(i64::from(base.option_count));
                ResponseValue::Choice {
                    option_id: format!("Option {}", index + 1),
                    option_count: base.option_count,
                }
            }
            MockResponse::Binary(base) => {
                let u: f64 = rng.gen();
                let q = (base.correct_prob + shift).clamp(0.0, 1.0);
                ResponseValue::Binary { correct: u8::from(u < q) }
            }
            MockResponse::FreeText(base) => {
                let text = if treated && cfg.effect_delta != 0.0 {
                    base.treated_text.as_ref().unwrap_or(&base.text)
                } else {
                    &base.text
                };
                ResponseValue::FreeText { text: text.clone() }
            }
        }
    }
}

/// Named request-body templates; each has exactly one `{input_text}` slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// JSON body `{"prompt": "<input_text>"}`.
    PlainPrompt,
    /// The input text itself as the request body.
    Raw,
}

/// Expected shape of the remote reply, driving the response parser.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteResponseKind {
    Interval,
    Scalar { lo: f64, hi: f64 },
    Choice { option_count: u32 },
    /// Reply text goes through the configured rating hook.
    Binary,
    FreeText,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token; tokens
    /// never appear in config files or CLI arguments.
    pub auth_env: String,
    pub template: TemplateId,
    pub response_kind: RemoteResponseKind,
    pub timeout_secs: f64,
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_backoff_ms() -> u64 {
    250
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(BackendError::Config("remote timeout must be positive".into()));
        }
        if self.endpoint.is_empty() {
            return Err(BackendError::Config("remote endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Grades a reply text to 0/1, e.g. against a gold answer key.
pub trait RatingFn: Send + Sync {
    fn rate(&self, semantic_id: &str, reply: &str) -> Result<u8, String>;
}

/// Bundled rater: extract the first "Option N" from the reply and compare
/// it with the gold option recorded for the semantic id.
pub struct GoldAnswerRater {
    gold: BTreeMap<String, String>,
}

impl GoldAnswerRater {
    pub fn new(gold: BTreeMap<String, String>) -> Self {
        Self { gold }
    }

    pub fn from_skeletons(skeletons: &[PairSkeleton]) -> Self {
        let gold = skeletons
            .iter()
            .filter_map(|s| s.gold.clone().map(|g| (s.semantic_id.clone(), g)))
            .collect();
        Self { gold }
    }
}

impl RatingFn for GoldAnswerRater {
    fn rate(&self, semantic_id: &str, reply: &str) -> Result<u8, String> {
        let gold = self
            .gold
            .get(semantic_id)
            .ok_or_else(|| format!("no gold answer recorded for `{semantic_id}`"))?;
        let chosen = extract_option(reply)
            .ok_or_else(|| format!("no `Option N` found in reply: {reply:?}"))?;
        Ok(u8::from(&chosen == gold))
    }
}

fn number_pattern() -> &'static regex::Regex {
    static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    PATTERN.get_or_init(|| regex::Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

fn option_pattern() -> &'static regex::Regex {
    static PATTERN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    PATTERN.get_or_init(|| regex::Regex::new(r"(?i)option\s*(\d+)").expect("valid regex"))
}

fn extract_number(reply: &str) -> Option<f64> {
    number_pattern().find(reply).and_then(|m| m.as_str().parse().ok())
}

fn extract_option(reply: &str) -> Option<String> {
    option_pattern().captures(reply).map(|c| format!("Option {}", &c[1]))
}

/// Pull the reply text out of a JSON envelope if there is one.
fn extract_reply_text(body: &str) -> String {
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(body) {
        for key in ["text", "response", "content", "completion"] {
            if let Some(text) = value.get(key).and_then(|v| v.as_str()) {
                return text.to_string();
            }
        }
    }
    body.to_string()
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
    rater: Option<Box<dyn RatingFn>>,
}

impl RemoteBackend {
    pub fn new(
        config: RemoteConfig,
        rater: Option<Box<dyn RatingFn>>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        if matches!(config.response_kind, RemoteResponseKind::Binary) && rater.is_none() {
            return Err(BackendError::Config(
                "binary response kind needs a rating hook (gold answers)".into(),
            ));
        }
        let token = std::env::var(&config.auth_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { config, client, token, rater })
    }

    fn request_once(&self, input_text: &str) -> Result<String, BackendError> {
        let mut request = self.client.post(&self.config.endpoint);
        request = match self.config.template {
            TemplateId::PlainPrompt => request
                .header("content-type", "application/json")
                .body(serde_json::json!({ "prompt": input_text }).to_string()),
            TemplateId::Raw => request.body(input_text.to_string()),
        };
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Remote { status: status.as_u16(), body });
        }
        Ok(body)
    }

    /// POST the rendered template, retrying transient failures with
    /// exponential backoff, then parse the reply per the declared kind.
    pub fn query(
        &self,
        input_text: &str,
        semantic_id: &str,
    ) -> Result<ResponseValue, BackendError> {
        let mut last_err = None;
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(8)),
                ));
            }
            match self.request_once(input_text) {
                Ok(body) => return self.parse_reply(&body, semantic_id),
                Err(e @ (BackendError::Remote { .. } | BackendError::Transport(_))) => {
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn parse_reply(&self, body: &str, semantic_id: &str) -> Result<ResponseValue, BackendError> {
        let reply = extract_reply_text(body);
        match &self.config.response_kind {
            RemoteResponseKind::Interval => {
                let value = extract_number(&reply).ok_or_else(|| BackendError::Parse {
                    expected: "interval",
                    detail: format!("no number in reply: {reply:?}"),
                })?;
                Ok(ResponseValue::Interval { value })
            }
            RemoteResponseKind::Scalar { lo, hi } => {
                let value = extract_number(&reply).ok_or_else(|| BackendError::Parse {
                    expected: "scalar",
                    detail: format!("no number in reply: {reply:?}"),
                })?;
                if !(*lo <= value && value <= *hi) {
                    return Err(BackendError::Parse {
                        expected: "scalar",
                        detail: format!("{value} outside declared range [{lo}, {hi}]"),
                    });
                }
                Ok(ResponseValue::Scalar { value, lo: *lo, hi: *hi })
            }
            RemoteResponseKind::Choice { option_count } => {
                let option = extract_option(&reply).ok_or_else(|| BackendError::Parse {
                    expected: "choice",
                    detail: format!("no `Option N` in reply: {reply:?}"),
                })?;
                let index: u32 = option["Option ".len()..].parse().map_err(|_| {
                    BackendError::Parse { expected: "choice", detail: "bad option index".into() }
                })?;
                if index == 0 || index > *option_count {
                    return Err(BackendError::Parse {
                        expected: "choice",
                        detail: format!("option {index} outside 1..={option_count}"),
                    });
                }
                Ok(ResponseValue::Choice { option_id: option, option_count: *option_count })
            }
            RemoteResponseKind::Binary => {
                let rater = self.rater.as_ref().expect("checked at construction");
                let correct = rater.rate(semantic_id, &reply).map_err(|detail| {
                    BackendError::Rating { semantic_id: semantic_id.to_string(), detail }
                })?;
                Ok(ResponseValue::Binary { correct })
            }
            RemoteResponseKind::FreeText => Ok(ResponseValue::FreeText { text: reply }),
        }
    }
}

/// A remote similarity judge: renders a two-slot prompt, POSTs it through
/// the same plain-prompt machinery as the remote backend, and reads the
/// first number of the reply as the raw score.
pub struct RemoteJudge {
    remote: RemoteBackend,
    template: String,
    native_range: (f64, f64),
    tolerance: f64,
}

impl RemoteJudge {
    pub fn new(
        endpoint: String,
        auth_env: String,
        template: String,
        native_range: (f64, f64),
        tolerance: f64,
        timeout_secs: f64,
        max_retries: u32,
    ) -> Result<Self, BackendError> {
        if !template.contains("{text_a}") || !template.contains("{text_b}") {
            return Err(BackendError::Config(
                "judge prompt template needs both {text_a} and {text_b} slots".into(),
            ));
        }
        if native_range.0.is_nan() || native_range.1.is_nan() || native_range.0 >= native_range.1
        {
            return Err(BackendError::Config("judge native range must have lo < hi".into()));
        }
        let remote = RemoteBackend::new(
            RemoteConfig {
                endpoint,
                auth_env,
                template: TemplateId::PlainPrompt,
                response_kind: RemoteResponseKind::FreeText,
                timeout_secs,
                max_retries,
                backoff_ms: default_backoff_ms(),
            },
            None,
        )?;
        Ok(Self { remote, template, native_range, tolerance })
    }
}

impl crate::metrics::TextJudge for RemoteJudge {
    fn native_range(&self) -> (f64, f64) {
        self.native_range
    }

    fn range_tolerance(&self) -> f64 {
        self.tolerance
    }

    fn raw_score(&self, a: &str, b: &str) -> Result<f64, crate::metrics::JudgeError> {
        let prompt = self.template.replace("{text_a}", a).replace("{text_b}", b);
        let reply = self
            .remote
            .query(&prompt, "judge")
            .map_err(|e| crate::metrics::JudgeError(e.to_string()))?;
        let ResponseValue::FreeText { text } = reply else {
            return Err(crate::metrics::JudgeError("unexpected judge reply kind".into()));
        };
        extract_number(&text)
            .ok_or_else(|| crate::metrics::JudgeError(format!("no score in judge reply: {text:?}")))
    }
}

/// A configured model under test. Shareable across threads.
pub enum Backend {
    Mock(MockBackend),
    Remote(RemoteBackend),
}

impl Backend {
    /// Build a backend; `rater` is consulted only by remote binary parsing.
    pub fn from_config(
        config: &BackendConfig,
        rater: Option<Box<dyn RatingFn>>,
    ) -> Result<Self, BackendError> {
        match config {
            BackendConfig::Mock(mock) => Ok(Backend::Mock(MockBackend::new(mock.clone())?)),
            BackendConfig::Remote(remote) => {
                Ok(Backend::Remote(RemoteBackend::new(remote.clone(), rater)?))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Mock(_) => "mock",
            Backend::Remote(_) => "remote",
        }
    }

    /// Ask the model for a response. `background_hint` stands in for the
    /// background the model infers from the input; the mock consumes it,
    /// the remote client ignores it (a real model infers on its own).
    pub fn query(
        &self,
        input_text: &str,
        background_hint: &str,
        semantic_id: &str,
    ) -> Result<ResponseValue, BackendError> {
        match self {
            Backend::Mock(mock) => Ok(mock.query(background_hint, semantic_id)),
            Backend::Remote(remote) => remote.query(input_text, semantic_id),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CollectOptions {
    /// Abort on the first failed item instead of dropping it.
    pub fail_fast: bool,
    /// Worker threads for remote collection; results are reassembled in
    /// input order regardless.
    pub concurrency: usize,
}

impl Default for CollectOptions {
    fn default() -> Self {
        Self { fail_fast: false, concurrency: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectStatus {
    Ok,
    Dropped,
}

/// One line of the collection manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub semantic_id: String,
    pub status: CollectStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Fill both sides of every skeleton by querying the backend.
///
/// Output order equals input order. In the default mode, failed items are
/// dropped and recorded in the manifest; with `fail_fast` the first error
/// aborts the whole collection.
pub fn collect_responses(
    skeletons: &[PairSkeleton],
    backend: &Backend,
    opts: &CollectOptions,
) -> Result<(PairedSample, Vec<ManifestEntry>), BackendError> {
    if skeletons.is_empty() {
        return Err(BackendError::EmptySample);
    }
    let background_pair =
        (skeletons[0].left.background.clone(), skeletons[0].right.background.clone());
    for skeleton in skeletons {
        if skeleton.left.background != background_pair.0
            || skeleton.right.background != background_pair.1
        {
            return Err(BackendError::PairingError(skeleton.semantic_id.clone()));
        }
    }

    let results = run_queries(skeletons, backend, opts)?;

    let mut observations = Vec::with_capacity(skeletons.len());
    let mut manifest = Vec::with_capacity(skeletons.len());
    for (skeleton, result) in skeletons.iter().zip(results) {
        match result {
            Ok((left, right)) => {
                observations.push(PairedObservation {
                    semantic_id: skeleton.semantic_id.clone(),
                    left: Observation {
                        semantic_id: skeleton.semantic_id.clone(),
                        background: skeleton.left.background.clone(),
                        input_text: skeleton.left.input_text.clone(),
                        response: left,
                    },
                    right: Observation {
                        semantic_id: skeleton.semantic_id.clone(),
                        background: skeleton.right.background.clone(),
                        input_text: skeleton.right.input_text.clone(),
                        response: right,
                    },
                });
                manifest.push(ManifestEntry {
                    semantic_id: skeleton.semantic_id.clone(),
                    status: CollectStatus::Ok,
                    reason: None,
                });
            }
            Err(e) => {
                if opts.fail_fast {
                    return Err(e);
                }
                manifest.push(ManifestEntry {
                    semantic_id: skeleton.semantic_id.clone(),
                    status: CollectStatus::Dropped,
                    reason: Some(e.to_string()),
                });
            }
        }
    }

    if observations.is_empty() {
        return Err(BackendError::AllDropped { manifest });
    }
    let sample = PairedSample::new(background_pair, observations)?;
    Ok((sample, manifest))
}

type PairResult = Result<(ResponseValue, ResponseValue), BackendError>;

fn query_pair(skeleton: &PairSkeleton, backend: &Backend) -> PairResult {
    let left = backend.query(
        &skeleton.left.input_text,
        &skeleton.left.background,
        &skeleton.semantic_id,
    )?;
    let right = backend.query(
        &skeleton.right.input_text,
        &skeleton.right.background,
        &skeleton.semantic_id,
    )?;
    Ok((left, right))
}

/// Query every skeleton, optionally across worker threads. Each worker
/// pulls the next unclaimed index, so outputs land in their input slots
/// no matter how the scheduler interleaves.
fn run_queries(
    skeletons: &[PairSkeleton],
    backend: &Backend,
    opts: &CollectOptions,
) -> Result<Vec<PairResult>, BackendError> {
    let workers = opts.concurrency.max(1).min(skeletons.len());
    if workers <= 1 {
        return Ok(skeletons.iter().map(|s| query_pair(s, backend)).collect());
    }

    let slots: Mutex<Vec<Option<PairResult>>> = Mutex::new((0..skeletons.len()).map(|_| None).collect());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if index >= skeletons.len() {
                    break;
                }
                let result = query_pair(&skeletons[index], backend);
                slots.lock().expect("slot lock")[index] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("slot lock");
    Ok(results.into_iter().map(|r| r.expect("every index claimed")).collect())
}
