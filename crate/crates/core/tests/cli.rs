mod common;

use std::path::Path;
use std::process::{Command, Output};

fn tagshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagshield")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn ingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixture_path("posts200.tsv");
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    ok(&tagshield(&["--quiet", "ingest", "--input", p(&fx), "--out", p(&a)]));
    ok(&tagshield(&["--quiet", "ingest", "--input", p(&a), "--out", p(&b)]));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let out = tagshield(&["stats", "--corpus", "/nonexistent/posts.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = tagshield(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_attack_verifies_and_handles_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixture_path("posts200.tsv");
    for kind in ["overload", "piggyback"] {
        let out = dir.path().join(kind);
        ok(&tagshield(&[
            "--quiet", "gen-attack", "--corpus", p(&fx), "--kind", kind, "--size", "0.05", "--seed", "3", "--out", p(&out), "--verify",
        ]));
        let s = tagshield::attackgen::read_scenario(&out).unwrap();
        assert_eq!(s.len(), 10);
    }
    let zero = dir.path().join("zero");
    ok(&tagshield(&[
        "--quiet", "gen-attack", "--corpus", p(&fx), "--kind", "overload", "--size", "0", "--out", p(&zero),
    ]));
    assert!(tagshield::attackgen::read_scenario(&zero).unwrap().is_empty());

    let out = tagshield(&[
        "gen-attack", "--corpus", p(&fx), "--kind", "piggyback", "--size", "0.1", "--target", "http://missing.example/", "--out",
        p(&dir.path().join("bad")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_classify_recommend_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixture_path("posts200.tsv");
    let model = dir.path().join("nb.json");
    ok(&tagshield(&["--quiet", "train", "--corpus", p(&fx), "--classifier", "nb", "--out", p(&model)]));
    let scenario = dir.path().join("scn");
    ok(&tagshield(&[
        "--quiet", "gen-attack", "--corpus", p(&fx), "--kind", "overload", "--size", "0.1", "--seed", "1", "--out", p(&scenario),
    ]));
    let out = tagshield(&["classify", "--model", p(&model), "--input", p(&scenario.join("scenario.tsv"))]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 20);
    assert!(text.lines().all(|l| l.split('\t').count() == 4));

    let out = tagshield(&[
        "--quiet", "recommend", "--corpus", p(&fx), "--scenario", p(&scenario), "--model", p(&model), "--embedding-dim", "16", "--k", "5",
    ]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.is_empty());
    assert!(text.lines().all(|l| l.split('\t').count() == 4));

    let out = tagshield(&["recommend", "--corpus", p(&fx), "--user", "nobody", "--embedding-dim", "8"]);
    assert_eq!(out.status.code(), Some(3));
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("cfg.json");
    let corpus = common::fixture_path("posts200.tsv");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"attack": "overload", "classifiers": ["nb", "svm"], "attack_sizes": [0.05, 0.1],
                "folds": 3, "runs": 2, "seed": 4, "corpus": {{"file": "{}"}},
                "embeddings": {{"fallback": {{"dim": 16, "seed": 0}}}},
                "params": {{"svm": {{"epochs": 5}}}}}}"#,
            corpus.display()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn experiment_reports_are_byte_identical_across_processes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&tagshield(&["--quiet", "experiment", "--config", p(&cfg), "--out", p(&a)]));
    ok(&tagshield(&["--quiet", "experiment", "--config", p(&cfg), "--out", p(&b), "--jobs", "1"]));
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());

    for (fmt, sep) in [("csv", ','), ("tsv", '\t')] {
        let out = tagshield(&["report", "--report", p(&a.join("report.json")), "--format", fmt]);
        ok(&out);
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
        assert!(text.lines().next().unwrap().contains(sep));
    }
    let out = tagshield(&["report", "--report", p(&a.join("report.json")), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"folds": 0}"#).unwrap();
    let out = tagshield(&["experiment", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
