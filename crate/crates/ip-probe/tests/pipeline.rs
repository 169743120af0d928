//! CLI-level pipeline behavior: exit codes, deterministic subsampling,
//! and file-context error reporting, driven through the compiled binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_ip-probe")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

struct Run {
    status: std::process::ExitStatus,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let output = Command::new(binary()).args(args).output().unwrap();
    Run {
        status: output.status,
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

fn write_config(dir: &Path, pool_lines: &[&str], extra: &str) -> PathBuf {
    let pool = dir.join("pool.jsonl");
    std::fs::write(&pool, pool_lines.join("\n") + "\n").unwrap();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        format!(
            r#"{{
  "backgrounds": [{{"id": "am_en"}}, {{"id": "br_en"}}],
  "pool": "pool.jsonl",
  "backend": {{"mock": {{
    "response": {{"interval": {{"mean": 5.0, "sd": 1.0}}}},
    "effect_delta": 1.0,
    "treated": "br_en",
    "seed": 3,
    "noise": "per_side"
  }}}},
  "metric": {{"kind": "interval_difference"}},
  "seed": 11,
  "out_dir": "out",
  "ethics": {{"application_id": "t", "ip_is_ethical": true, "rationale": "r"}}{extra}
}}"#
        ),
    )
    .unwrap();
    config
}

fn pool_line(id: &str) -> String {
    format!(r#"{{"semantic_id":"{id}","background":"am_en","input_text":"ask about {id}"}}"#)
}

#[test]
fn missing_config_exits_one() {
    let r = run(&["pair", "--config", "/nonexistent/config.json"]);
    assert_eq!(r.status.code(), Some(1), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("cannot read config"));
}

#[test]
fn unknown_config_key_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &[pool_line("q1").as_str()], ",\n  \"bogus\": true");
    let r = run(&["pair", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(r.stderr.contains("bogus"), "stderr: {}", r.stderr);
}

#[test]
fn duplicate_semantic_id_names_the_offender() {
    let tmp = tempfile::tempdir().unwrap();
    let lines = [pool_line("q1"), pool_line("q1")];
    let config =
        write_config(tmp.path(), &[lines[0].as_str(), lines[1].as_str()], "");
    let r = run(&["pair", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(r.stderr.contains("q1"), "stderr: {}", r.stderr);
}

#[test]
fn degenerate_sample_exits_three() {
    // one pair is enough to collect and score but too few to test
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &[pool_line("q1").as_str()], "");
    for cmd in ["pair", "collect", "score"] {
        let r = run(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(r.status.success(), "{cmd} failed: {}", r.stderr);
    }
    let r = run(&["test", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "stderr: {}", r.stderr);
    assert!(r.stderr.contains("degenerate"), "stderr: {}", r.stderr);
}

#[test]
fn empty_skeletons_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &[pool_line("q1").as_str()], "");
    let empty = tmp.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let r = run(&[
        "collect",
        "--config",
        config.to_str().unwrap(),
        "--skeletons",
        empty.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(r.stderr.contains("at least one pair"), "stderr: {}", r.stderr);
}

#[test]
fn subsample_is_seeded_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let lines: Vec<String> = (0..12).map(|i| pool_line(&format!("q{i:02}"))).collect();
    let refs: Vec<&str> = lines.iter().map(|s| s.as_str()).collect();
    let config = write_config(tmp.path(), &refs, "");

    let mut outputs = Vec::new();
    for out in ["s1", "s2"] {
        let r = run(&[
            "pair",
            "--config",
            config.to_str().unwrap(),
            "--subsample",
            "5",
            "--seed",
            "21",
            "--out",
            tmp.path().join(out).to_str().unwrap(),
        ]);
        assert!(r.status.success(), "stderr: {}", r.stderr);
        outputs.push(std::fs::read(tmp.path().join(out).join("skeletons.jsonl")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 5);

    // a different seed picks a different subset
    let r = run(&[
        "pair",
        "--config",
        config.to_str().unwrap(),
        "--subsample",
        "5",
        "--seed",
        "22",
        "--out",
        tmp.path().join("s3").to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let other = std::fs::read(tmp.path().join("s3").join("skeletons.jsonl")).unwrap();
    assert_ne!(outputs[0], other);
}

#[test]
fn similarity_track_without_m0_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &[pool_line("q1").as_str()], "")
        .to_str()
        .unwrap()
        .to_string();
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("interval_difference", "scalar_similarity")
        .replace(
            r#""response": {"interval": {"mean": 5.0, "sd": 1.0}}"#,
            r#""response": {"scalar": {"mean": 0.5, "sd": 0.1, "lo": 0.0, "hi": 1.0}}"#,
        );
    std::fs::write(&config, text).unwrap();

    let r = run(&["test", "--config", &config]);
    assert_eq!(r.status.code(), Some(1));
    assert!(r.stderr.contains("m0"), "stderr: {}", r.stderr);

    // supplying --m0 gets past config validation
    let out = tmp.path().join("out");
    for cmd in ["pair", "collect", "score"] {
        let r = run(&[cmd, "--config", &config, "--m0", "0.9", "--out", out.to_str().unwrap()]);
        assert!(r.status.success(), "{cmd}: {}", r.stderr);
    }
}

#[test]
fn text_audit_uses_sign_test() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(&[
        "audit",
        "--config",
        data_dir().join("audit_text.json").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(r.status.success(), "stderr: {}", r.stderr);
    assert!(r.stdout.contains("sign"), "stdout: {}", r.stdout);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["results"][0]["method"], "sign");
    assert_eq!(report["ip_detected"], true);
}

#[test]
fn strict_tail_flag_changes_the_p_value() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("audit_text.json");
    let mut p_values = Vec::new();
    for (out, tail) in [("inc", "inclusive"), ("strict", "strict")] {
        let r = run(&[
            "audit",
            "--config",
            config.to_str().unwrap(),
            "--tail",
            tail,
            "--out",
            tmp.path().join(out).to_str().unwrap(),
        ]);
        assert!(r.status.success(), "stderr: {}", r.stderr);
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(out).join("report.json")).unwrap(),
        )
        .unwrap();
        p_values.push(report["results"][0]["p_value"].as_f64().unwrap());
    }
    // all 12 pairs fall below m0, so inclusive gives 2^-12 and strict 0
    assert!((p_values[0] - 2f64.powi(-12)).abs() < 1e-15);
    assert_eq!(p_values[1], 0.0);
}

#[test]
fn calibrate_rejects_zero_replications() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        &[pool_line("q1").as_str()],
        ",\n  \"calibrate\": {\"null_replications\": 0}",
    );
    let r = run(&["calibrate", "--config", config.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert!(r.stderr.contains("replication"), "stderr: {}", r.stderr);
}

#[test]
fn unreachable_remote_exits_two_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    std::fs::write(&pool, pool_line("q1") + "\n" + &pool_line("q2") + "\n").unwrap();
    // a port nothing listens on; connections are refused immediately
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", dead.local_addr().unwrap());
    drop(dead);
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        format!(
            r#"{{
  "backgrounds": [{{"id": "am_en"}}, {{"id": "br_en"}}],
  "pool": "pool.jsonl",
  "backend": {{"remote": {{
    "endpoint": "{endpoint}",
    "auth_env": "IP_PROBE_API_TOKEN",
    "template": "plain_prompt",
    "response_kind": "interval",
    "timeout_secs": 2.0,
    "max_retries": 0,
    "backoff_ms": 10
  }}}},
  "metric": {{"kind": "interval_difference"}},
  "seed": 11,
  "out_dir": "out",
  "ethics": {{"application_id": "t", "ip_is_ethical": true, "rationale": "r"}}
}}"#
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let r = run(&["pair", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "stderr: {}", r.stderr);
    let r =
        run(&["collect", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2), "stderr: {}", r.stderr);
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    assert!(manifest.contains("dropped"));
}

#[test]
fn three_backgrounds_adjust_threshold_across_series_files() {
    let tmp = tempfile::tempdir().unwrap();
    let pool = tmp.path().join("pool.jsonl");
    std::fs::write(&pool, pool_line("q1") + "\n").unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "backgrounds": [{"id": "sae"}, {"id": "aae"}, {"id": "esl"}],
  "pool": "pool.jsonl",
  "backend": {"mock": {
    "response": {"interval": {"mean": 0.0, "sd": 1.0}},
    "effect_delta": 0.0,
    "treated": "aae",
    "seed": 3
  }},
  "metric": {"kind": "interval_difference"},
  "seed": 11,
  "out_dir": "out",
  "ethics": {"application_id": "t", "ip_is_ethical": false, "rationale": "r"}
}"#,
    )
    .unwrap();

    // hand the test three pre-scored series, one per background pair
    let mut series_args: Vec<String> = Vec::new();
    for (name, pair, shift) in [
        ("s1.json", ("sae", "aae"), 1.0),
        ("s2.json", ("sae", "esl"), 0.0),
        ("s3.json", ("aae", "esl"), 0.0),
    ] {
        let values: Vec<f64> =
            (0..40).map(|k| shift + if k % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let path = tmp.path().join(name);
        std::fs::write(
            &path,
            format!(
                r#"{{"track":"difference","background_pair":["{}","{}"],"values":{}}}"#,
                pair.0,
                pair.1,
                serde_json::to_string(&values).unwrap()
            ),
        )
        .unwrap();
        series_args.push(path.to_str().unwrap().to_string());
    }

    let out = tmp.path().join("out");
    let mut args = vec![
        "test",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(series_args.iter().map(|s| s.as_str()));
    let r = run(&args);
    assert!(r.status.success(), "stderr: {}", r.stderr);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let threshold = report["adjusted_threshold"].as_f64().unwrap();
    assert!((threshold - 0.05 / 3.0).abs() < 1e-12);
    assert_eq!(format!("{threshold:.3}"), "0.017");
    assert_eq!(report["results"].as_array().unwrap().len(), 3);
    // the shifted pair rejects, the null pairs do not
    assert_eq!(report["per_pair_decisions"]["sae|aae"], true);
    assert_eq!(report["per_pair_decisions"]["sae|esl"], false);
    assert_eq!(report["ip_detected"], true);
    assert_eq!(report["alignment"], "misaligned_unwanted_ip");
}
