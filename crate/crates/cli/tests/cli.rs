use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fedcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedcorr"))
        .args(args)
        .output()
        .expect("spawn fedcorr")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn logreg_config(dir: &Path, scheme: &str, rounds: usize) -> String {
    let path = dir.join(format!("{scheme}.json"));
    let text = format!(
        r#"{{
            "data": {{"kind": "synth_logreg", "samples": 300, "features": 12, "margin": 0.2, "seed": 4}},
            "model": {{"kind": "logreg"}},
            "fed": {{"clients": 5, "tau": 3, "gamma": 0.1, "rounds": {rounds}, "seed": 2,
                     "partition": {{"kind": "label_limited", "labels_per_client": 1}},
                     "scheme": "{scheme}"}},
            "target_accuracy": 0.5,
            "output": {{"dir": "out-{scheme}"}}
        }}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn baseline_run_writes_outputs_with_exact_uplink() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = logreg_config(dir.path(), "none", 7);
    let out = fedcorr(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("out-none");
    let csv = fs::read_to_string(run_dir.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scheme,rounds_to_target,uplink,downlink,total"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields[0], "none");
    // No target: totals cover the full run.
    let full_uplink = 7 * 5 * 12;
    let rounds = fs::read_to_string(run_dir.join("rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 7);
    let per_round: u64 = rounds
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["ledger"]["uplink"].as_u64().unwrap())
        .sum();
    assert_eq!(per_round, full_uplink);
    assert!(stdout(&out).contains(&fields.join(",")));
    assert_eq!(fs::read_to_string(run_dir.join("states.jsonl")).unwrap(), "");
}

#[test]
fn compressed_run_traces_states() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = logreg_config(dir.path(), "adasvdfed", 6);
    let out = fedcorr(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let states = fs::read_to_string(dir.path().join("out-adasvdfed/states.jsonl")).unwrap();
    let records: Vec<Value> = states.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 6);
    for r in &records {
        let round = r["round"].as_u64().unwrap();
        let modes = r["modes"].as_array().unwrap();
        assert_eq!(modes.len(), 5);
        if round % 3 == 1 {
            assert!(modes.iter().all(|m| m == "update"));
        } else {
            assert!(modes.iter().all(|m| m == "spatial" || m == "pred"));
        }
    }
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = logreg_config(dir.path(), "pcafed", 5);
    let mut outputs = Vec::new();
    for name in ["a", "b", "c"] {
        let out_dir = dir.path().join(name);
        let seed = if name == "c" { "10" } else { "9" };
        let out = fedcorr(&["run", "--config", &cfg, "--seed", seed, "--out-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            fs::read_to_string(out_dir.join("summary.csv")).unwrap(),
            fs::read_to_string(out_dir.join("rounds.jsonl")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0].1, outputs[2].1);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(fedcorr(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let cfg = fs::read_to_string(logreg_config(dir.path(), "none", 3)).unwrap();
    fs::write(&bad, cfg.replace("\"seed\": 2", "\"seed\": 2, \"unknown\": true")).unwrap();
    let out = fedcorr(&["probe", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown"));

    let missing = dir.path().join("missing.json");
    assert_eq!(fedcorr(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(fedcorr(&["run"]).status.code(), Some(2));
}

#[test]
fn probe_emits_one_reading_per_round_and_kind() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = logreg_config(dir.path(), "svdfed", 8);
    let out_dir = dir.path().join("probe");
    let out = fedcorr(&["probe", "--config", &cfg, "--out-dir", out_dir.to_str().unwrap(), "--strict-paper-pca"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("probe.jsonl")).unwrap();
    let readings: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut seen = std::collections::BTreeSet::new();
    for r in &readings {
        let key = (r["round"].as_u64().unwrap(), r["kind"].as_str().unwrap().to_string());
        assert!(seen.insert(key), "duplicate reading {r}");
        let alpha = r["alpha"].as_f64().unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&alpha));
    }
    // Default probe window h = 5.
    let first_temporal = readings
        .iter()
        .filter(|r| r["kind"] == "temporal")
        .map(|r| r["round"].as_u64().unwrap())
        .min();
    assert_eq!(first_temporal, Some(5));
    assert_eq!(readings.iter().filter(|r| r["kind"] == "spatial").count(), 8);
}

#[test]
fn calculators() {
    let out = fedcorr(&["breakeven", "100", "20"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "26");
    assert_eq!(fedcorr(&["breakeven", "20", "20"]).status.code(), Some(1));

    let c = std::f64::consts::FRAC_PI_4.cos().to_string();
    let out = fedcorr(&["horizon", &c]);
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("8"));
    assert!(text.contains("alternate (quarter turn): 2"));
    assert!(stdout(&fedcorr(&["horizon", "1"])).starts_with("unbounded"));
    assert_eq!(fedcorr(&["horizon", "0"]).status.code(), Some(1));

    assert_eq!(stdout(&fedcorr(&["reshape", "30720", "256"])).trim(), "m=256 n=120 padding=0");
    assert_eq!(stdout(&fedcorr(&["reshape", "10", "3"])).trim(), "m=3 n=4 padding=2");
}
