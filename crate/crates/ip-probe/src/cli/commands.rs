//! The staged pipeline commands: pair, collect, score, test, and the
//! audit command that composes them. Each stage reads and writes flat
//! files, so staged runs and `audit` produce byte-identical artifacts
//! for the same config and seed.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backends::{Backend, CollectOptions, GoldAnswerRater, RemoteJudge};
use crate::core::{PairedSample, ScoreSeries};
use crate::metrics::{score_sample, MetricKind, MetricSpec, TokenJaccardJudge};
use crate::sampling::{
    build_paired_inputs, MarkerLexicon, MarkerSubstituter, PairSkeleton, SamplingError,
    SourcePool, StyleTransfer, TransferDirection, TransferError,
};
use crate::stats::{bonferroni_aggregate, run_pair_test, PermutationParams, SignTestParams};
use crate::verdict::{alignment_verdict, decide_ip, render_report, Provenance, ReportDocument};

use super::config::{sha256_file, stage_seed, JudgeConfig, OutPaths, RunConfig};
use super::{io, CliError};

/// Identity transformer used when no lexicon is configured; the two sides
/// then differ only in their background label.
struct IdentityTransfer;

impl StyleTransfer for IdentityTransfer {
    fn transfer(&self, text: &str) -> Result<String, TransferError> {
        Ok(text.to_string())
    }
}

fn load_lexicon(config: &RunConfig) -> Result<Option<MarkerLexicon>, CliError> {
    match &config.lexicon {
        None => Ok(None),
        Some(path) => {
            let (side_a, side_b) = config.lexicon_sides();
            let lexicon = MarkerLexicon::from_tsv_path(side_a, side_b, path)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            Ok(Some(lexicon))
        }
    }
}

fn target_background(config: &RunConfig, pool: &SourcePool) -> Result<String, CliError> {
    if !config.backgrounds.contains(pool.background()) {
        return Err(CliError::Validation(format!(
            "pool background `{}` is not in the background set",
            pool.background()
        )));
    }
    if let Some(target) = &config.target_background {
        if target == pool.background() {
            return Err(CliError::Config(
                "target_background equals the pool background".into(),
            ));
        }
        return Ok(target.clone());
    }
    let others: Vec<_> = config
        .backgrounds
        .labels()
        .iter()
        .filter(|l| l.id != pool.background())
        .collect();
    match others.as_slice() {
        [only] => Ok(only.id.clone()),
        _ => Err(CliError::Config(
            "more than two backgrounds declared; set target_background explicitly".into(),
        )),
    }
}

/// Build paired-input skeletons from the pool and write them out.
pub fn cmd_pair(config: &RunConfig, out: &OutPaths) -> Result<Vec<PairSkeleton>, CliError> {
    let pool = SourcePool::from_jsonl_path(&config.pool)
        .map_err(|e| CliError::Validation(format!("{}: {e}", config.pool.display())))?;
    let target = target_background(config, &pool)?;

    let pool = match config.subsample {
        Some(amount) if amount < pool.items().len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(config.seed, "pair"));
            let mut indices =
                rand::seq::index::sample(&mut rng, pool.items().len(), amount).into_vec();
            indices.sort_unstable();
            pool.retain_indices(&indices)
        }
        _ => pool,
    };

    let lexicon = load_lexicon(config)?;
    let transfer: Box<dyn StyleTransfer> = match &lexicon {
        Some(lexicon) => {
            let direction = if pool.background() == lexicon.side_a() {
                TransferDirection::AToB
            } else if pool.background() == lexicon.side_b() {
                TransferDirection::BToA
            } else {
                return Err(CliError::Config(format!(
                    "lexicon sides ({}, {}) do not cover the pool background `{}`",
                    lexicon.side_a(),
                    lexicon.side_b(),
                    pool.background()
                )));
            };
            Box::new(MarkerSubstituter::new(lexicon.clone(), direction))
        }
        None => {
            eprintln!("note: no lexicon configured; pairing inputs verbatim");
            Box::new(IdentityTransfer)
        }
    };

    let skeletons = match build_paired_inputs(&pool, transfer.as_ref(), &target) {
        Ok(skeletons) => skeletons,
        Err(SamplingError::TransferFailure { failures, completed, total }) => {
            if config.collect.fail_fast {
                return Err(CliError::Validation(format!(
                    "style transfer failed for {} of {total} items (first: `{}`: {})",
                    failures.len(),
                    failures[0].semantic_id,
                    failures[0].reason
                )));
            }
            for failure in &failures {
                eprintln!(
                    "warning: dropping `{}`: style transfer failed: {}",
                    failure.semantic_id, failure.reason
                );
            }
            completed
        }
        Err(e) => return Err(CliError::Validation(e.to_string())),
    };

    io::write_jsonl(&out.skeletons, &skeletons)?;
    Ok(skeletons)
}

fn build_backend(config: &RunConfig, skeletons: &[PairSkeleton]) -> Result<Backend, CliError> {
    let rater = Some(Box::new(GoldAnswerRater::from_skeletons(skeletons)) as Box<_>);
    Backend::from_config(&config.backend, rater).map_err(CliError::from)
}

/// Query both sides of every skeleton and write the sample and manifest.
pub fn cmd_collect(
    config: &RunConfig,
    skeletons_path: &Path,
    out: &OutPaths,
) -> Result<PairedSample, CliError> {
    let skeletons: Vec<PairSkeleton> = io::read_jsonl(skeletons_path)?;
    if skeletons.is_empty() {
        return Err(CliError::Validation(format!(
            "no skeletons in {}; a sample needs at least one pair",
            skeletons_path.display()
        )));
    }
    let backend = build_backend(config, &skeletons)?;
    let opts = CollectOptions {
        fail_fast: config.collect.fail_fast,
        concurrency: config.collect.concurrency,
    };
    match crate::backends::collect_responses(&skeletons, &backend, &opts) {
        Ok((sample, manifest)) => {
            io::write_jsonl(&out.manifest, &manifest)?;
            io::write_json_doc(&out.sample, &sample)?;
            Ok(sample)
        }
        Err(crate::backends::BackendError::AllDropped { manifest }) => {
            io::write_jsonl(&out.manifest, &manifest)?;
            Err(CliError::Backend(format!(
                "every item failed; drop manifest written to {}",
                out.manifest.display()
            )))
        }
        Err(e) => Err(CliError::from(e)),
    }
}

fn build_metric_spec(config: &RunConfig) -> Result<MetricSpec, CliError> {
    if config.metric.kind != MetricKind::JudgedTextSimilarity {
        return MetricSpec::new(config.metric.kind).map_err(|e| CliError::Config(e.to_string()));
    }
    let judge = config
        .metric
        .judge
        .as_ref()
        .ok_or_else(|| CliError::Config("judged_text_similarity needs a judge section".into()))?;
    let judge: Box<dyn crate::metrics::TextJudge> = match judge {
        JudgeConfig::TokenJaccard => Box::new(TokenJaccardJudge),
        JudgeConfig::Remote(remote) => Box::new(
            RemoteJudge::new(
                remote.endpoint.clone(),
                remote.auth_env.clone(),
                remote.prompt_template.clone(),
                (remote.native_lo, remote.native_hi),
                remote.tolerance,
                remote.timeout_secs,
                remote.max_retries,
            )
            .map_err(|e| CliError::Config(e.to_string()))?,
        ),
    };
    Ok(MetricSpec::with_judge(config.metric.kind, judge))
}

/// Score a collected sample into a difference or similarity series.
pub fn cmd_score(
    config: &RunConfig,
    sample_path: &Path,
    out: &OutPaths,
) -> Result<ScoreSeries, CliError> {
    let sample: PairedSample = io::read_json_doc(sample_path)?;
    let spec = build_metric_spec(config)?;
    let series = score_sample(&sample, &spec)
        .map_err(|e| CliError::Validation(format!("{}: {e}", sample_path.display())))?;
    io::write_json_doc(&out.series, &series)?;
    Ok(series)
}

fn provenance(config: &RunConfig) -> Result<Provenance, CliError> {
    let endpoint = match &config.backend {
        crate::backends::BackendConfig::Remote(remote) => Some(remote.endpoint.clone()),
        crate::backends::BackendConfig::Mock(_) => None,
    };
    Ok(Provenance {
        backend: config.backend.name().to_string(),
        seed: config.seed,
        alpha: config.alpha,
        permutations: Some(config.permutations.count),
        m0: config.m0,
        lexicon_hash: match &config.lexicon {
            Some(path) => Some(sha256_file(path).map_err(|e| CliError::Io(e.to_string()))?),
            None => None,
        },
        pool_hash: Some(sha256_file(&config.pool).map_err(|e| CliError::Io(e.to_string()))?),
        endpoint,
    })
}

/// Run the per-pair tests, aggregate under Bonferroni, decide, and render.
pub fn cmd_test(
    config: &RunConfig,
    series_paths: &[std::path::PathBuf],
    out: &OutPaths,
) -> Result<ReportDocument, CliError> {
    if series_paths.is_empty() {
        return Err(CliError::Config("no series files given".into()));
    }
    let sign_params = config.m0.map(|m0| SignTestParams { m0, tail: config.tail });

    let mut results = Vec::with_capacity(series_paths.len());
    for path in series_paths {
        let series: ScoreSeries = io::read_json_doc(path)?;
        let pair = crate::core::pair_key(series.background_pair());
        let perm = PermutationParams {
            permutations: config.permutations.count,
            seed: stage_seed(config.seed, &format!("test:{pair}")),
            mode: config.permutations.mode,
        };
        let result = run_pair_test(&series, &perm, sign_params.as_ref())
            .map_err(|e| CliError::from_stats(format!("{}: {e}", path.display()), &e))?;
        results.push(result);
    }

    let tests = bonferroni_aggregate(results, &config.backgrounds, config.alpha)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let ip_exists = decide_ip(&tests);
    let verdict = alignment_verdict(ip_exists, &config.ethics);
    let document = render_report(&tests, verdict, &config.ethics, provenance(config)?);

    io::write_text(&out.report_json, &(document.to_json_string() + "\n"))?;
    io::write_text(&out.report_text, &document.table)?;
    Ok(document)
}

/// The whole pipeline on conventional paths: pair, collect, score, test.
pub fn cmd_audit(config: &RunConfig, out: &OutPaths) -> Result<ReportDocument, CliError> {
    cmd_pair(config, out)?;
    cmd_collect(config, &out.skeletons, out)?;
    cmd_score(config, &out.sample, out)?;
    cmd_test(config, std::slice::from_ref(&out.series), out)
}
