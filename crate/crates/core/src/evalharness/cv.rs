use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{Class, ClassifierKind, ClassifierParams, PostScorer, SpamFilter};
use crate::corpus::{FolksonomyPost, Label};
use crate::error::{Error, Result};
use crate::seeds;

/// Confusion counts with the bogus class as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Class, predicted: Class) {
        match (truth, predicted) {
            (Class::Bogus, Class::Bogus) => self.tp += 1,
            (Class::Legitimate, Class::Bogus) => self.fp += 1,
            (Class::Bogus, Class::Legitimate) => self.fn_ += 1,
            (Class::Legitimate, Class::Legitimate) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub support: usize,
}

impl ClassMetrics {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        ClassMetrics {
            precision,
            recall,
            fscore: fscore(precision, recall),
            support: tp + fn_,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: Confusion,
    pub legitimate: ClassMetrics,
    pub bogus: ClassMetrics,
    pub overall: f64,
}

impl ClassificationReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let mut report = ClassificationReport {
            confusion: c,
            legitimate: ClassMetrics::new(c.tn, c.fn_, c.fp),
            bogus: ClassMetrics::new(c.tp, c.fp, c.fn_),
            overall: 0.0,
        };
        report.overall = overall_fscore(&report);
        report
    }
}

/// Support-weighted mean of the per-class F-scores.
pub fn overall_fscore(report: &ClassificationReport) -> f64 {
    let (l, b) = (&report.legitimate, &report.bogus);
    let total = l.support + b.support;
    if total == 0 {
        return 0.0;
    }
    (l.fscore * l.support as f64 + b.fscore * b.support as f64) / total as f64
}

pub fn class_of(post: &FolksonomyPost) -> Result<Class> {
    match post.label() {
        Label::Legitimate => Ok(Class::Legitimate),
        Label::Bogus => Ok(Class::Bogus),
        Label::Unlabeled => Err(Error::invalid(format!(
            "post ({}, {}) has no label",
            post.user_id(),
            post.resource_id()
        ))),
    }
}

/// Stratified fold index for every example: each class is shuffled and
/// dealt round-robin, so per-class fold sizes differ by at most one.
pub fn stratified_folds(classes: &[Class], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("folds must be >= 2"));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, c) in classes.iter().enumerate() {
        by_class[c.index()].push(i);
    }
    let (bogus, legit) = (by_class[0].len(), by_class[1].len());
    if bogus < folds || legit < folds {
        return Err(Error::ClassImbalance {
            legitimate: legit,
            bogus,
            required: folds,
        });
    }
    let mut rng = seeds::rng(seed);
    let mut assignment = vec![0; classes.len()];
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    Ok(assignment)
}

/// Cross-validate an arbitrary fitting procedure. `fit` receives the
/// training posts and the fold index; confusion counts are pooled over
/// folds before computing P/R/F.
pub fn cross_validate_with<F, S>(
    posts: &[FolksonomyPost],
    folds: usize,
    threshold: f64,
    seed: u64,
    fit: F,
) -> Result<ClassificationReport>
where
    F: Fn(&[FolksonomyPost], usize) -> Result<S> + Sync,
    S: PostScorer,
{
    let classes = posts.iter().map(class_of).collect::<Result<Vec<_>>>()?;
    let assignment = stratified_folds(&classes, folds, seed)?;
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<FolksonomyPost> = posts
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a != f)
                .map(|(p, _)| p.clone())
                .collect();
            let (test, truth): (Vec<FolksonomyPost>, Vec<Class>) = posts
                .iter()
                .zip(&classes)
                .zip(&assignment)
                .filter(|(_, &a)| a == f)
                .map(|((p, c), _)| (p.clone(), *c))
                .unzip();
            let scorer = fit(&train, f)?;
            let scores = scorer.score_posts(&test)?;
            let mut c = Confusion::default();
            for (t, s) in truth.iter().zip(scores) {
                c.record(*t, Class::from_score(s, threshold));
            }
            Ok(c)
        })
        .collect::<Result<Vec<Confusion>>>()?;
    let mut pooled = Confusion::default();
    for c in &per_fold {
        pooled.merge(c);
    }
    Ok(ClassificationReport::from_confusion(pooled))
}

pub fn cross_validate(
    posts: &[FolksonomyPost],
    kind: ClassifierKind,
    params: &ClassifierParams,
    folds: usize,
    threshold: f64,
    seed: u64,
) -> Result<ClassificationReport> {
    cross_validate_with(posts, folds, threshold, seed, |train, f| {
        SpamFilter::fit(kind, train, params, seeds::derive(seed, "fold", &[f as u64]))
    })
}
