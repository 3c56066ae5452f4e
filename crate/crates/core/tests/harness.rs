mod common;

use tagshield::attackgen::AttackKind;
use tagshield::classify::{ClassifierKind, PostScorer, TrainingMeta};
use tagshield::corpus::{Corpus, FolksonomyPost, Label};
use tagshield::evalharness::{self, Confusion, ExperimentConfig, ExperimentOptions, ExperimentReport, FittedFilter, TableFormat};
use tagshield::vectorize::{self, EmbeddingTable};
use tagshield::Result;

/// Reads the ground-truth label: a perfect filter.
struct LabelOracle;

impl PostScorer for LabelOracle {
    fn score_post(&self, post: &FolksonomyPost) -> Result<f64> {
        Ok(if post.label() == Label::Legitimate { 1.0 } else { 0.0 })
    }
}

/// Keeps everything.
struct KeepAll;

impl PostScorer for KeepAll {
    fn score_post(&self, _: &FolksonomyPost) -> Result<f64> {
        Ok(1.0)
    }
}

fn tiny_config(attack: AttackKind) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        attack,
        classifiers: vec![ClassifierKind::NaiveBayes, ClassifierKind::LinearSvm],
        attack_sizes: vec![0.0, 0.05, 0.1],
        folds: 3,
        runs: 2,
        seed: 9,
        ..ExperimentConfig::default()
    };
    c.params.svm.epochs = 5;
    c
}

fn table(c: &Corpus) -> EmbeddingTable {
    vectorize::fallback_embeddings(&vectorize::build_vocab(c, None), 16, 0).unwrap()
}

fn stub_report(attack: AttackKind, stub: fn() -> FittedFilter) -> ExperimentReport {
    let corpus = common::fixture();
    let cfg = tiny_config(attack);
    let factory = move |_: ClassifierKind, _: &[FolksonomyPost], _: u64| Ok(stub());
    evalharness::run_experiment_with(&cfg, &corpus, &table(&corpus), &ExperimentOptions::default(), &factory).unwrap()
}

fn oracle() -> FittedFilter {
    FittedFilter {
        scorer: Box::new(LabelOracle),
        meta: TrainingMeta::NaiveBayes,
    }
}

fn keep_all() -> FittedFilter {
    FittedFilter {
        scorer: Box::new(KeepAll),
        meta: TrainingMeta::NaiveBayes,
    }
}

#[test]
fn training_set_has_ceiling_bogus_count() {
    let c = common::fixture();
    let cfg = tiny_config(AttackKind::Overload);
    let (posts, scenario) = evalharness::build_training_set(&c, &cfg, 1).unwrap();
    let bogus = posts.iter().filter(|p| p.label() == Label::Bogus).count();
    assert_eq!(bogus, 60);
    assert_eq!(scenario.len(), 60);
    assert_eq!(posts.len(), 260);
    assert!(!c.resources().contains(scenario.bogus_resource_id()));
}

#[test]
fn oracle_filter_removes_all_impact() {
    for attack in [AttackKind::Overload, AttackKind::Piggyback] {
        let r = stub_report(attack, oracle);
        for s in &r.classification {
            assert_eq!(s.fscore.overall.mean, 1.0);
            assert_eq!(s.fscore.bogus.mean, 1.0);
        }
        let mut any_before = false;
        for cell in &r.impact {
            assert_eq!(cell.after.affected_fraction.max, 0.0, "{attack:?} {cell:?}");
            any_before |= cell.before.affected_fraction.max > 0.0;
        }
        assert!(any_before, "{attack:?}: attack had no effect to remove");
    }
}

#[test]
fn keep_all_filter_leaves_impact_unchanged() {
    let r = stub_report(AttackKind::Overload, keep_all);
    for cell in &r.impact {
        assert_eq!(cell.before, cell.after);
    }
    for s in &r.classification {
        // Everything predicted legitimate: no bogus post is caught.
        assert_eq!(s.fscore.bogus.mean, 0.0);
    }
}

#[test]
fn zero_attack_size_is_unaffected() {
    let r = stub_report(AttackKind::Overload, keep_all);
    for cell in r.impact.iter().filter(|c| c.attack_size == 0.0) {
        assert_eq!(cell.before.affected_fraction.max, 0.0);
        assert_eq!(cell.after.affected_fraction.max, 0.0);
    }
}

#[test]
fn hand_confusion_gives_expected_bogus_f() {
    let c = Confusion { tp: 8, fp: 2, fn_: 1, tn: 9 };
    let r = evalharness::ClassificationReport::from_confusion(c);
    // P = 0.8, R = 8/9, F = 2PR/(P+R) = 16/19.
    assert!((r.bogus.fscore - 16.0 / 19.0).abs() < 1e-12);
    assert!((r.bogus.precision - 0.8).abs() < 1e-15);
}

#[test]
fn real_classifiers_run_deterministically() {
    let corpus = common::fixture();
    let t = table(&corpus);
    let cfg = tiny_config(AttackKind::Piggyback);
    let one = ExperimentOptions { jobs: Some(1), progress: false };
    let two = ExperimentOptions { jobs: Some(2), progress: false };
    let a = evalharness::run_experiment(&cfg, &corpus, &t, &one).unwrap();
    let b = evalharness::run_experiment(&cfg, &corpus, &t, &two).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.runs.len(), 2);
    assert_eq!(a.impact.len(), 2 * 3);
    for cell in &a.impact {
        let s = &cell.before.affected_fraction;
        assert!(s.min <= s.mean && s.mean <= s.max);
    }
}

#[test]
fn tiny_network_experiment_runs() {
    let corpus = common::fixture();
    let mut cfg = tiny_config(AttackKind::Overload);
    cfg.classifiers = vec![ClassifierKind::NeuralNet];
    cfg.runs = 1;
    cfg.params.nn.embed_dim = 4;
    cfg.params.nn.lstm_units = 4;
    cfg.params.nn.seq_len = 8;
    cfg.params.nn.schedule.max_epochs = 3;
    let r = evalharness::run_experiment(&cfg, &corpus, &table(&corpus), &ExperimentOptions::default()).unwrap();
    assert_eq!(r.classification.len(), 1);
    match &r.runs[0].training[0].meta {
        TrainingMeta::NeuralNet(m) => assert!(m.epochs_run <= 3),
        other => panic!("unexpected meta {other:?}"),
    }
}

#[test]
fn emitted_report_round_trips() {
    let r = stub_report(AttackKind::Overload, oracle);
    let dir = tempfile::tempdir().unwrap();
    evalharness::emit_report(&r, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back = ExperimentReport::from_json(&text).unwrap();
    assert_eq!(back, r);
    assert_eq!(back.to_json().unwrap(), text);

    let mut csv = Vec::new();
    tagshield::evalharness::report::write_impact_table(&r, TableFormat::Csv, &mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    // Header plus a before and an after row per cell.
    assert_eq!(csv.lines().count(), 1 + 2 * r.impact.len());
}

#[test]
fn config_rejects_unknown_fields_and_bad_values() {
    assert!(ExperimentConfig::from_json(r#"{"atack": "overload"}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"attack_sizes": [1.5]}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"folds": 1}"#).is_err());
    let c = ExperimentConfig::from_json(r#"{"attack": "piggyback", "params": {"svm": {"epochs": 3}}}"#).unwrap();
    assert_eq!(c.attack, AttackKind::Piggyback);
    assert_eq!(c.params.svm.epochs, 3);
    assert_eq!(c.k, 15);
}
