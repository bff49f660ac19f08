use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stacp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stacp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data.csv");
    let mut args = vec!["synth", "--out", data.to_str().unwrap(), "--users", "12", "--pois", "80", "--visits", "40", "--seed", "3"];
    args.extend_from_slice(extra);
    let o = stacp(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data
}

fn quick_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, format!("{body}[factorization]\nk = 4\nmax_epochs = 40\n")).unwrap();
    p
}

#[test]
fn evaluate_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = quick_config(dir.path(), "");
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = stacp(&["evaluate", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in [
        "manifest.json",
        "report.txt",
        "report.csv",
        "significance.csv",
        "excluded.tsv",
        "centers.tsv",
        "recommendations/stacp.tsv",
        "recommendations/pfmpd.tsv",
        "models/static.ckpt",
        "models/working.ckpt",
        "models/leisure.ckpt",
        "split/train.csv",
        "split/validation.csv",
        "split/test.csv",
        "split/catalog.tsv",
    ] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs between reruns");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["power_law"]["b"].is_number());
    let csv = std::fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("stacp,recall,20,ALL,")));
    let recs = std::fs::read_to_string(a.join("recommendations/stacp.tsv")).unwrap();
    assert!(recs.lines().nth(1).unwrap().split('\t').count() == 4);
}

#[test]
fn invalid_lambda_is_rejected_before_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // the dataset does not exist: a config error must win over a data error
    let o = stacp(&["evaluate", "--data", "/nonexistent.csv", "--lambda", "1.3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    assert!(!out.exists());
}

#[test]
fn every_invalid_field_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "cutoffs = [0]\n[centers]\nalpha = 2.0\n[factorization]\nk = 0\n").unwrap();
    let o = stacp(&["evaluate", "--config", cfg.to_str().unwrap(), "--data", "x.csv"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["cutoffs", "centers", "factorization"] {
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn unknown_flags_and_methods_are_config_errors() {
    assert_eq!(code(&stacp(&["evaluate", "--frobnicate"])), 1);
    assert_eq!(code(&stacp(&["evaluate", "--methods", "stacp,magic"])), 1);
    assert_eq!(code(&stacp(&["--help"])), 0);
}

#[test]
fn missing_dataset_is_a_data_error_with_failure_marker() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = stacp(&["evaluate", "--data", dir.path().join("missing.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let marker = std::fs::read_to_string(out.join("FAILED")).unwrap();
    assert!(marker.starts_with("stage ingest"), "{marker}");
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"failed\""));
}

#[test]
fn degenerate_power_law_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one_poi_each.csv");
    let mut rows = String::new();
    for u in 0..4 {
        for t in 0..5 {
            rows.push_str(&format!("u{u},p{u},{},{},0.0\n", 1_333_324_800 + t * 86_400, u as f64 * 0.1));
        }
    }
    std::fs::write(&data, rows).unwrap();
    let out = dir.path().join("out");
    let cfg = quick_config(dir.path(), "");
    let o = stacp(&["evaluate", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--methods", "pfmpd", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(out.join("FAILED")).unwrap().starts_with("stage train"));
}

#[test]
fn toppopular_alone_skips_factorization() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    let o = stacp(&["evaluate", "--data", data.to_str().unwrap(), "--methods", "toppopular", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let models: Vec<_> = std::fs::read_dir(out.join("models")).unwrap().collect();
    assert!(models.is_empty());
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["training"].as_array().unwrap().len(), 0);
    assert!(out.join("recommendations/toppopular.tsv").exists());
}

#[test]
fn staged_subcommands_stop_where_asked() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = quick_config(dir.path(), "");
    let go = |cmd: &str| {
        let out = dir.path().join(cmd);
        let o = stacp(&[cmd, "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let ingest = go("ingest");
    assert!(ingest.join("checkins.csv").exists() && !ingest.join("split").exists());
    let split = go("split");
    assert!(split.join("split/catalog.tsv").exists() && !split.join("models").exists());
    let train = go("train");
    assert!(train.join("models/static.ckpt").exists() && !train.join("recommendations").exists());
    let rec = go("recommend");
    assert!(rec.join("recommendations/no-tc.tsv").exists() && !rec.join("report.txt").exists());
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let cfg = quick_config(dir.path(), "methods = [\"stacp\", \"no-tc\"]\n");
    let out = dir.path().join("sweep");
    let o = stacp(&["sweep", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--sweep", "d=1,15"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "axis,value,method,metric,cutoff,mean,users");
    // 2 points x 2 methods x 3 metrics x 2 cutoffs
    assert_eq!(csv.lines().count(), 1 + 24);
    assert!(csv.contains("d,15,no-tc,ndcg,20,"));
    let bad = stacp(&["sweep", "--data", data.to_str().unwrap(), "--sweep", "alpha=0.5,1.5"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn synth_is_deterministic_and_radius_zero_sits_on_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(&dir.path().join("a"), &["--radius", "0"]);
    let b = synth(&dir.path().join("b"), &["--radius", "0"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let planted = std::fs::read_to_string(format!("{}.planted.tsv", a.display())).unwrap();
    let anchors: std::collections::BTreeSet<(String, String)> = planted
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[2].to_string())
        })
        .collect();
    for line in std::fs::read_to_string(&a).unwrap().lines() {
        let f: Vec<&str> = line.split(',').collect();
        assert!(anchors.contains(&(f[0].to_string(), f[1].to_string())), "{line}");
    }
    assert_eq!(code(&stacp(&["synth", "--out", dir.path().join("x.csv").to_str().unwrap(), "--users", "0"])), 1);
}
