use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn purge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_purge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = purge(dir, args);
    assert!(
        out.status.success(),
        "purge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn prepared(extra: &[&str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    for cmd in ["make-fixture", "build-base", "build-forget"] {
        let mut args = vec![cmd];
        args.extend_from_slice(extra);
        ok(dir.path(), &args);
    }
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn json_lines(dir: &Path, name: &str) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn summary(dir: &Path, method: &str) -> serde_json::Value {
    serde_json::from_slice(&read(dir, &format!("out/{method}.summary.json"))).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = prepared(&[]);
    let d = dir.path();
    let forget: serde_json::Value = serde_json::from_slice(&read(d, "out/forget.json")).unwrap();
    let phrases: Vec<&str> = forget["phrases"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
    assert!(phrases.len() <= 50);
    assert!(phrases.contains(&"stephen king"));
    assert!(forget["config_hash"].as_str().unwrap().len() == 64);

    ok(d, &["unlearn", "--method", "purge"]);
    let trace = json_lines(d, "out/purge.trace.jsonl");
    assert_eq!(trace[0]["kind"], "header");
    let rewards: Vec<f64> = trace
        .iter()
        .filter(|r| r["kind"] == "step")
        .map(|r| r["reward_mean"].as_f64().unwrap())
        .collect();
    let k = rewards.len() / 10;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&rewards[rewards.len() - k..]) > mean(&rewards[..k]) + 0.3);
    for t in 1..=10 {
        assert!(d.join(format!("out/purge.t{t}.ckpt")).exists());
    }

    let table = ok(d, &["evaluate", "--checkpoint", "out/base.ckpt", "--checkpoint", "out/purge.ckpt"]);
    let reports: Vec<_> = json_lines(d, "out/eval.jsonl").into_iter().filter(|r| r["kind"] == "report").collect();
    assert_eq!(reports.len(), 2);
    assert!(reports[1]["forget_recall"].as_f64().unwrap() < reports[0]["forget_recall"].as_f64().unwrap());
    assert!(table.contains("forget recall"));

    let out = ok(
        d,
        &["verify", "--trace", "out/purge.trace.jsonl", "--checkpoint", "out/purge.t5.ckpt", "--checkpoint", "out/purge.ckpt"],
    );
    assert!(!out.contains("FAIL"), "{out}");
    assert!(out.contains("suppression") && out.contains("pinsker") && out.contains("hoeffding"));
    let lines = json_lines(d, "out/verify.jsonl");
    assert_eq!(lines[0]["kind"], "header");
    assert!(lines[1..].iter().all(|l| l["pass"] == true));
}

#[test]
fn single_checkpoint_gives_one_column() {
    let dir = prepared(&[]);
    let table = ok(dir.path(), &["evaluate", "--checkpoint", "out/base.ckpt"]);
    let header = table.lines().nth(1).unwrap();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["metric", "base"]);
}

#[test]
fn reruns_are_byte_identical_and_seed_dependent() {
    let a = prepared(&["--seed", "3"]);
    let b = prepared(&["--seed", "3"]);
    for dir in [&a, &b] {
        ok(dir.path(), &["unlearn", "--method", "purge", "--seed", "3"]);
    }
    for name in ["out/base.ckpt", "out/forget.json", "out/purge.ckpt", "out/purge.trace.jsonl", "out/purge.summary.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    ok(a.path(), &["unlearn", "--method", "purge", "--seed", "4"]);
    assert_ne!(read(a.path(), "out/purge.ckpt"), read(b.path(), "out/purge.ckpt"));
}

#[test]
fn missing_and_corrupt_inputs_are_data_errors() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = purge(d, &["build-base"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));

    std::fs::write(d.join("dataset.jsonl"), "not json\n").unwrap();
    let out = purge(d, &["build-base"]);
    assert_eq!(code(&out), 3);
    assert!(!out.stderr.is_empty());

    let dir = prepared(&[]);
    let out = purge(dir.path(), &["evaluate", "--checkpoint", "out/nope.ckpt"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.ckpt"));

    std::fs::write(dir.path().join("out/bad.ckpt"), b"PURGECKP garbage").unwrap();
    assert_eq!(code(&purge(dir.path(), &["evaluate", "--checkpoint", "out/bad.ckpt"])), 3);
}

#[test]
fn unknown_target_is_rejected() {
    let dir = prepared(&[]);
    let out = purge(dir.path(), &["build-forget", "--target", "zzyzx"]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("zzyzx"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&purge(dir.path(), &["unlearn", "--method", "sgd"])), 2);
    assert_eq!(code(&purge(dir.path(), &["make-fixture", "--set", "train.bogus=1"])), 2);
    assert_eq!(code(&purge(dir.path(), &["make-fixture", "--set", "train.clip_epsilon=-1"])), 2);
    assert_eq!(code(&purge(dir.path(), &["make-fixture", "--config", "missing.toml"])), 2);
    std::fs::write(dir.path().join("run.toml"), "seed = 5\n[train]\nmix_alpha = 0.1\n").unwrap();
    ok(dir.path(), &["make-fixture", "--config", "run.toml"]);
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = prepared(&[]);
    let d = dir.path();
    ok(d, &["unlearn", "--method", "purge"]);
    let text = std::fs::read_to_string(d.join("out/purge.trace.jsonl")).unwrap();
    let mut lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let last = lines.iter_mut().rev().find(|l| l["kind"] == "leakage").unwrap();
    last["p"] = serde_json::json!(0.7);
    let tampered: String = lines.iter().map(|l| format!("{l}\n")).collect();
    std::fs::write(d.join("out/tampered.jsonl"), tampered).unwrap();
    let out = purge(d, &["verify", "--trace", "out/tampered.jsonl"]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let out = purge(d, &["verify", "--trace", "out/purge.trace.jsonl", "--set", "train.kl_beta=0.5"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn long_gradient_ascent_collapses() {
    let dir = prepared(&[]);
    let d = dir.path();
    ok(d, &["unlearn", "--method", "ga", "--set", "baseline.epochs=960"]);
    let s = summary(d, "ga");
    assert_eq!(s["collapsed"], true);
    assert!(s["steps"].as_u64().unwrap() < 960);
    for method in ["dpo", "npo", "rt"] {
        ok(d, &["unlearn", "--method", method]);
        let s = summary(d, method);
        assert_eq!(s["method"], method);
        assert_eq!(s["steps"], 80);
        let trace = json_lines(d, &format!("out/{method}.trace.jsonl"));
        assert_eq!(trace[0]["method"], method);
    }
}

#[test]
fn leakage_floor_rises_with_mixing() {
    let dir = prepared(&[]);
    let d = dir.path();
    let mut finals = Vec::new();
    for alpha in ["0", "0.1", "0.3"] {
        let out_dir = format!("out/a{alpha}");
        let set = format!("train.mix_alpha={alpha}");
        let args = ["--set", &set, "--out-dir", &out_dir];
        for f in ["base.ckpt", "forget.json"] {
            std::fs::create_dir_all(d.join(&out_dir)).unwrap();
            std::fs::copy(d.join("out").join(f), d.join(&out_dir).join(f)).unwrap();
        }
        ok(d, &[&["unlearn", "--method", "purge"][..], &args].concat());
        let trace = format!("{out_dir}/purge.trace.jsonl");
        ok(d, &[&["verify", "--trace", &trace][..], &args].concat());
        let leak = summary(d, &format!("a{alpha}/purge"))["leakage"].as_array().unwrap().clone();
        finals.push(leak.last().unwrap()[1].as_f64().unwrap());
    }
    assert!(finals[0] < finals[1] && finals[1] < finals[2], "{finals:?}");
}
