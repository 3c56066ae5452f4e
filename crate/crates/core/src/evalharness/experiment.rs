use std::collections::BTreeSet;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::cv::{self, ClassificationReport};
use super::report::{
    ClassificationSummary, CorpusSummary, ExperimentReport, ImpactCell, ImpactSummary, RunRecord, RunSeeds,
    TrainingRecord, REPORT_FORMAT, REPORT_VERSION,
};
use crate::attackgen::{self, AttackConfig, AttackKind, AttackScenario};
use crate::classify::{partition_by_scores, ClassifierKind, PostScorer, SpamFilter, TrainingMeta};
use crate::corpus::{self, Corpus, FolksonomyPost};
use crate::error::{Error, Result};
use crate::recommend::{self, ImpactMetrics, TopKList};
use crate::seeds;
use crate::vectorize::EmbeddingTable;

/// A fitted filter as seen by the harness.
pub struct FittedFilter {
    pub scorer: Box<dyn PostScorer + Send>,
    pub meta: TrainingMeta,
}

impl From<SpamFilter> for FittedFilter {
    fn from(f: SpamFilter) -> Self {
        let meta = f.meta().clone();
        FittedFilter {
            scorer: Box::new(f),
            meta,
        }
    }
}

/// `(kind, training posts, seed) -> filter`. The default trains a
/// [`SpamFilter`]; tests substitute stubs.
pub type FilterFactory<'a> = dyn Fn(ClassifierKind, &[FolksonomyPost], u64) -> Result<FittedFilter> + Sync + 'a;

#[derive(Clone, Debug, Default)]
pub struct ExperimentOptions {
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    /// Progress lines on standard error.
    pub progress: bool,
}

pub fn attack_config(config: &ExperimentConfig, kind: AttackKind, size: f64, seed: u64, bogus_resource: String) -> AttackConfig {
    AttackConfig {
        kind,
        n_popular_tags: config.n_popular_tags,
        max_size: config.max_size,
        bogus_resource_id: bogus_resource,
        target_resource_id: config.target_resource.clone(),
        attack_size: size,
        seed,
    }
}

/// Legitimate posts plus `ceil(ratio * legit)` freshly generated bogus
/// posts on a dedicated training resource.
pub fn build_training_set(
    corpus: &Corpus,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<FolksonomyPost>, AttackScenario)> {
    let legit: Vec<FolksonomyPost> = corpus.legitimate_posts().cloned().collect();
    if legit.is_empty() {
        return Err(Error::Empty);
    }
    let clean = Corpus::new(legit);
    let bogus_id = attackgen::fresh_resource_id(&clean, "bogus-train");
    let cfg = attack_config(config, config.attack, config.train_injection_ratio, seed, bogus_id);
    let scenario = attackgen::generate(&clean, &cfg)?;
    let mut posts = clean.into_posts();
    posts.extend(scenario.bogus_posts.iter().cloned());
    Ok((posts, scenario))
}

/// Impact of `scenario` on the recommendations computed from `view`
/// (the attacked corpus, possibly filtered). `population` are the users
/// whose lists count; those absent from `view` get empty lists.
pub fn measure_impact(
    view: &Corpus,
    population: &[String],
    scenario: &AttackScenario,
    table: &EmbeddingTable,
    k: usize,
) -> Result<ImpactMetrics> {
    let bogus = scenario.bogus_resource_id();
    if scenario.is_empty() || !view.resources().contains(bogus) {
        return Ok(ImpactMetrics::unaffected(population.len()));
    }
    let vectors = recommend::entity_vectors(view, table)?;
    let seen = view.resources_by_user();
    let none = BTreeSet::new();
    match &scenario.target_resource_id {
        None => {
            let lists = population
                .iter()
                .map(|u| match vectors.user(u) {
                    Some(_) => recommend::topk(u, &vectors, k, seen.get(u.as_str()).unwrap_or(&none)),
                    None => Ok(TopKList::empty(u)),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(recommend::overload_impact(&lists, bogus, k))
        }
        Some(target) => {
            // The target stays in every ranking, even for users who
            // annotated it, so bogus and target can be compared.
            let rankings = population
                .iter()
                .map(|u| match vectors.user(u) {
                    Some(_) => {
                        let mut ex = seen.get(u.as_str()).cloned().unwrap_or_default();
                        ex.remove(target.as_str());
                        recommend::full_ranking(u, &vectors, &ex)
                    }
                    None => Ok(TopKList::empty(u)),
                })
                .collect::<Result<Vec<_>>>()?;
            if view.resources().contains(target) {
                recommend::piggyback_impact(&rankings, bogus, target, k)
            } else {
                // Target filtered away entirely: the bogus resource wins
                // wherever it is ranked at all.
                let mut m = recommend::overload_impact(&rankings, bogus, k);
                let ranked = rankings.iter().filter(|r| r.rank_of(bogus).is_some()).count();
                m.affected_count = ranked;
                m.affected_fraction = if population.is_empty() {
                    0.0
                } else {
                    ranked as f64 / population.len() as f64
                };
                Ok(m)
            }
        }
    }
}

pub fn run_seeds(root: u64, run: usize) -> RunSeeds {
    let r = [run as u64];
    RunSeeds {
        sampling: seeds::derive(root, "sampling", &r),
        attack_train: seeds::derive(root, "attack-train", &r),
        attack_test: seeds::derive(root, "attack-test", &r),
        cv: seeds::derive(root, "cv", &r),
        model: seeds::derive(root, "model", &r),
    }
}

pub fn model_seed(seeds: &RunSeeds, kind: ClassifierKind) -> u64 {
    seeds::derive(seeds.model, kind.as_str(), &[])
}

pub fn scenario_seed(seeds: &RunSeeds, attack_size: f64) -> u64 {
    seeds::derive(seeds.attack_test, "size", &[attack_size.to_bits()])
}

struct RunOutput {
    record: RunRecord,
    classification: Vec<ClassificationReport>,
    /// `[size][classifier]`
    before: Vec<ImpactMetrics>,
    after: Vec<Vec<ImpactMetrics>>,
}

fn cell_error(run: usize, classifier: &str, attack_size: f64) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Experiment {
        run,
        classifier: classifier.to_string(),
        attack_size,
        source: Box::new(e),
    }
}

fn run_once(
    config: &ExperimentConfig,
    corpus: &Corpus,
    table: &EmbeddingTable,
    factory: &FilterFactory<'_>,
    run: usize,
    progress: bool,
) -> Result<RunOutput> {
    let seeds = run_seeds(config.seed, run);
    let say = |msg: String| {
        if progress {
            eprintln!("[run {}/{}] {msg}", run + 1, config.runs);
        }
    };
    let ctx = |c: &'static str| cell_error(run, c, config.train_injection_ratio);

    let sub = match config.n_users {
        Some(n) => corpus::sample_users(corpus, n, seeds.sampling).map_err(ctx("none"))?,
        None => corpus.clone(),
    };
    let clean = Corpus::new(sub.legitimate_posts().cloned().collect());
    if clean.is_empty() {
        return Err(ctx("none")(Error::Empty));
    }
    let population: Vec<String> = clean.users().iter().cloned().collect();
    let (training, train_scenario) = build_training_set(&clean, config, seeds.attack_train).map_err(ctx("none"))?;

    let mut classification = Vec::new();
    let mut filters = Vec::new();
    for &kind in &config.classifiers {
        let seed = model_seed(&seeds, kind);
        say(format!("{kind}: {}-fold cross-validation", config.folds));
        let report = cv::cross_validate_with(&training, config.folds, config.threshold, seeds.cv, |train, f| {
            factory(kind, train, seeds::derive(seed, "fold", &[f as u64])).map(|ff| ff.scorer)
        })
        .map_err(cell_error(run, kind.as_str(), config.train_injection_ratio))?;
        classification.push(report);
        say(format!("{kind}: training on {} posts", training.len()));
        let fitted = factory(kind, &training, seed).map_err(cell_error(run, kind.as_str(), config.train_injection_ratio))?;
        filters.push((kind, seed, fitted));
    }

    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut scenarios = Vec::new();
    for &size in &config.attack_sizes {
        say(format!("attack size {size}"));
        let bogus_id = attackgen::fresh_resource_id(&clean, "bogus-test");
        let acfg = attack_config(config, config.attack, size, scenario_seed(&seeds, size), bogus_id);
        let scenario = attackgen::generate(&clean, &acfg).map_err(cell_error(run, "none", size))?;
        let attacked = attackgen::inject(&clean, &scenario).map_err(cell_error(run, "none", size))?;
        before.push(measure_impact(&attacked, &population, &scenario, table, config.k).map_err(cell_error(run, "none", size))?);
        let mut row = Vec::new();
        for (kind, _, fitted) in &filters {
            let m = fitted
                .scorer
                .score_posts(attacked.posts())
                .and_then(|scores| {
                    let (kept, _) = partition_by_scores(&attacked, &scores, config.threshold);
                    measure_impact(&kept, &population, &scenario, table, config.k)
                })
                .map_err(cell_error(run, kind.as_str(), size))?;
            row.push(m);
        }
        after.push(row);
        scenarios.push(scenario.metadata());
    }

    Ok(RunOutput {
        record: RunRecord {
            run,
            seeds,
            users: population.len(),
            legitimate_posts: clean.len(),
            training_posts: training.len(),
            training_bogus: train_scenario.len(),
            training: filters
                .into_iter()
                .map(|(classifier, seed, f)| TrainingRecord {
                    classifier,
                    seed,
                    meta: f.meta,
                })
                .collect(),
            scenarios,
        },
        classification,
        before,
        after,
    })
}

pub fn default_factory(config: &ExperimentConfig) -> impl Fn(ClassifierKind, &[FolksonomyPost], u64) -> Result<FittedFilter> + Sync + '_ {
    move |kind, posts, seed| SpamFilter::fit(kind, posts, &config.params, seed).map(FittedFilter::from)
}

pub fn run_experiment(
    config: &ExperimentConfig,
    corpus: &Corpus,
    table: &EmbeddingTable,
    options: &ExperimentOptions,
) -> Result<ExperimentReport> {
    run_experiment_with(config, corpus, table, options, &default_factory(config))
}

/// Runs are independent and may execute concurrently; results are
/// reduced in run order, so reports do not depend on scheduling.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    corpus: &Corpus,
    table: &EmbeddingTable,
    options: &ExperimentOptions,
    factory: &FilterFactory<'_>,
) -> Result<ExperimentReport> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty);
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = options.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let outputs = pool.install(|| {
        (0..config.runs)
            .into_par_iter()
            .map(|r| run_once(config, corpus, table, factory, r, options.progress))
            .collect::<Result<Vec<RunOutput>>>()
    })?;

    let classification = config
        .classifiers
        .iter()
        .enumerate()
        .map(|(ci, &kind)| ClassificationSummary::new(kind, outputs.iter().map(|o| o.classification[ci]).collect()))
        .collect();

    let mut impact = Vec::new();
    for (ci, &kind) in config.classifiers.iter().enumerate() {
        for (si, &size) in config.attack_sizes.iter().enumerate() {
            impact.push(ImpactCell {
                classifier: kind,
                attack_size: size,
                before: ImpactSummary::new(outputs.iter().map(|o| o.before[si].clone()).collect()),
                after: ImpactSummary::new(outputs.iter().map(|o| o.after[si][ci].clone()).collect()),
            });
        }
    }

    Ok(ExperimentReport {
        format: REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        corpus: CorpusSummary {
            posts: corpus.len(),
            users: corpus.users().len(),
            resources: corpus.resources().len(),
            vocabulary: corpus.vocabulary().len(),
            fingerprint: corpus.fingerprint(),
        },
        classification,
        impact,
        runs: outputs.into_iter().map(|o| o.record).collect(),
    })
}
