//! Command-line front end. Results go to files or standard output;
//! progress and diagnostics go to standard error.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attackgen::{self, AttackConfig, AttackKind, DEFAULT_MAX_SIZE, DEFAULT_POPULAR_TAGS};
use crate::classify::{self, ClassifierKind, ClassifierParams, PostScorer, SpamFilter};
use crate::corpus::{self, Corpus, Label};
use crate::error::Error;
use crate::evalharness::report::{self, TableFormat};
use crate::evalharness::{self, ExperimentConfig, ExperimentOptions, ExperimentReport};
use crate::recommend;
use crate::seeds;
use crate::vectorize::{self, EmbeddingTable, DEFAULT_EMBEDDING_DIM};

const SCHEMAS: &str = "\
FILE FORMATS
  Posts (TSV, UTF-8): one post per line
      user<TAB>resource<TAB>tag1,tag2,...
  Tags are trimmed, lowercased, and inner whitespace becomes `_`. Lines that
  are blank or start with `#` are ignored. Repeated (user, resource) pairs
  are merged by tag union.

  Attack scenario (directory): scenario.tsv holds the bogus posts in the
  posts format; scenario.json records kind, seed, attack_size,
  n_popular_tags, max_size, pool_size, pool, target_resource,
  bogus_resource, and n_posts.

  Word vectors (text): a `<count> <dim>` header line, then
      token v1 v2 ... v<dim>

  Top-k lists (TSV): user_id<TAB>rank<TAB>resource_id<TAB>score

EXPERIMENT CONFIG (JSON; every field optional)
  attack                \"overload\" | \"piggyback\"            [overload]
  classifiers           list of \"nb\" | \"svm\" | \"nn\"        [all three]
  train_injection_ratio bogus training posts per legit post   [0.3]
  attack_sizes          fractions of the legit post count     [0.001, 0.005, 0.01, 0.05, 0.1]
  k                     top-k list length                     [15]
  folds                 cross-validation folds                [10]
  runs                  seeded repetitions                    [5]
  seed                  root seed                             [0]
  n_popular_tags        overload/piggyback pool size          [75]
  max_size              bogus post size cap                   [50]
  target_resource       piggyback target        [most popular resource]
  threshold             posts scoring below are filtered      [0.5]
  n_users               per-run user subsample                [all users]
  corpus                {\"file\": PATH} | {\"synthetic\": {...}}  [synthetic]
  embeddings            {\"file\": PATH} | {\"fallback\": {\"dim\": N, \"seed\": N}}
                                                              [fallback, dim 300, seed 0]
  params                {\"nb_alpha\", \"svm\": {\"lambda\", \"epochs\"},
                         \"nn\": {\"embed_dim\", \"lstm_units\", \"dense_units\",
                         \"seq_len\", \"mask_padding\", \"adam\", \"schedule\"},
                         \"max_vocab\"}
  Relative paths resolve against the config file's directory.

OUTPUT DIRECTORY (experiment)
  report.json  classification.csv  impact.csv  scenario-metadata/

EXIT CODES
  0 success, 2 usage or validation error, 3 domain precondition failed,
  4 runtime failure";

#[derive(Debug, Parser)]
#[command(name = "tagshield", version, about = "Profile-injection attacks and spam filters for tag-based recommenders", after_long_help = SCHEMAS)]
pub struct Cli {
    /// Suppress progress output on standard error.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a posts TSV and write its canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
        /// Number of most popular tags to list.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Generate an attack scenario against a corpus.
    GenAttack(GenAttackArgs),
    /// Train a spam filter and save it as JSON.
    Train(TrainArgs),
    /// Score posts with a trained filter.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Output TSV (user, resource, score, prediction); stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export top-k recommendation lists.
    Recommend(RecommendArgs),
    /// Run the full attack/filter protocol from a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads [default: available processors].
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's run count.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Re-emit flat tables from a report.json.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, value_enum, default_value_t = Table::Impact)]
        table: Table,
        /// Write both tables into this directory instead of printing one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Table {
    Impact,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Overload,
    Piggyback,
}

impl From<KindArg> for AttackKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Overload => AttackKind::Overload,
            KindArg::Piggyback => AttackKind::Piggyback,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Nb,
    Svm,
    Nn,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(k: ClassifierArg) -> Self {
        match k {
            ClassifierArg::Nb => ClassifierKind::NaiveBayes,
            ClassifierArg::Svm => ClassifierKind::LinearSvm,
            ClassifierArg::Nn => ClassifierKind::NeuralNet,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenAttackArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Bogus posts as a fraction of the legitimate post count.
    #[arg(long)]
    size: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Piggyback target [default: most popular resource].
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = DEFAULT_POPULAR_TAGS)]
    popular_tags: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    max_size: usize,
    /// Identifier of the promoted resource [default: derived from kind and seed].
    #[arg(long)]
    bogus_resource: Option<String>,
    /// Re-read the written scenario and check it against the generation rules.
    #[arg(long)]
    verify: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Legitimate posts.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    classifier: ClassifierArg,
    #[arg(long)]
    out: PathBuf,
    /// Bogus posts (TSV). Without it, bogus training posts are generated.
    #[arg(long)]
    bogus: Option<PathBuf>,
    /// Attack kind for generated bogus posts.
    #[arg(long, value_enum, default_value_t = KindArg::Overload)]
    attack: KindArg,
    /// Generated bogus posts per legitimate post.
    #[arg(long, default_value_t = 0.30)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with classifier hyperparameters.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Attack scenario directory to inject before recommending.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Filter the corpus with this model first.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Word-vector file [default: deterministic fallback vectors].
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
    #[arg(long, default_value_t = recommend::DEFAULT_K)]
    k: usize,
    /// Only this user.
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(e: Error) -> Self {
        CliError {
            code: 4,
            message: e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::UnknownUser(_) | Error::UnknownResource(_) | Error::IdCollision(_) | Error::ClassImbalance { .. } => 3,
            Error::Experiment { .. } | Error::NonFinite(_) => 4,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn progress(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| CliError::runtime(Error::io(p, e)))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_failed(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::runtime(Error::io(path, e))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Ingest { input, out } => cmd_ingest(&input, &out, quiet),
        Command::Stats { corpus, json, top } => cmd_stats(&corpus, json, top),
        Command::GenAttack(args) => cmd_gen_attack(&args, quiet),
        Command::Train(args) => cmd_train(&args, quiet),
        Command::Classify {
            model,
            input,
            threshold,
            out,
        } => cmd_classify(&model, &input, threshold, out.as_deref()),
        Command::Recommend(args) => cmd_recommend(&args, quiet),
        Command::Experiment {
            config,
            out,
            jobs,
            seed,
            runs,
        } => cmd_experiment(&config, &out, jobs, seed, runs, quiet),
        Command::Report {
            report,
            format,
            table,
            out,
        } => cmd_report(&report, &format, table, out.as_deref()),
    }
}

/// Parse arguments from the process, run, and return the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn cmd_ingest(input: &Path, out: &Path, quiet: bool) -> CliResult<()> {
    let c = corpus::load_posts(input)?;
    corpus::save_posts(c.posts(), out).map_err(CliError::runtime)?;
    progress(quiet, format!("wrote {}", out.display()));
    println!(
        "users\t{}\nresources\t{}\nposts\t{}\nvocabulary\t{}",
        c.users().len(),
        c.resources().len(),
        c.len(),
        c.vocabulary().len()
    );
    Ok(())
}

pub fn cmd_stats(path: &Path, json: bool, top: usize) -> CliResult<()> {
    let c = corpus::load_posts(path)?;
    let sizes = corpus::size_distribution(&c)?;
    let mean_size = c.posts().iter().map(|p| p.len()).sum::<usize>() as f64 / c.len() as f64;
    let tags: Vec<(String, usize)> = corpus::tag_popularity(&c)
        .into_iter()
        .take(top)
        .map(|(t, n)| (t.as_str().to_string(), n))
        .collect();
    if json {
        let v = serde_json::json!({
            "users": c.users().len(),
            "resources": c.resources().len(),
            "posts": c.len(),
            "vocabulary": c.vocabulary().len(),
            "mean_post_size": mean_size,
            "max_post_size": sizes.max_size(),
            "top_tags": tags,
        });
        println!("{}", serde_json::to_string_pretty(&v).map_err(Error::from)?);
    } else {
        println!("users\t{}", c.users().len());
        println!("resources\t{}", c.resources().len());
        println!("posts\t{}", c.len());
        println!("vocabulary\t{}", c.vocabulary().len());
        println!("mean_post_size\t{mean_size}");
        println!("max_post_size\t{}", sizes.max_size());
        for (t, n) in tags {
            println!("tag\t{t}\t{n}");
        }
    }
    Ok(())
}

pub fn cmd_gen_attack(args: &GenAttackArgs, quiet: bool) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.size) {
        return Err(CliError::usage(format!("--size must lie in [0, 1], got {}", args.size)));
    }
    let c = corpus::load_posts(&args.corpus)?;
    let kind: AttackKind = args.kind.into();
    let mut cfg = AttackConfig::new(kind, args.size, args.seed);
    cfg.n_popular_tags = args.popular_tags;
    cfg.max_size = args.max_size;
    cfg.target_resource_id = args.target.clone();
    if let Some(b) = &args.bogus_resource {
        cfg.bogus_resource_id = b.clone();
    }
    let scenario = attackgen::generate(&c, &cfg)?;
    attackgen::write_scenario(&scenario, &args.out).map_err(CliError::runtime)?;
    progress(
        quiet,
        format!("{} bogus posts written to {}", scenario.len(), args.out.display()),
    );
    if args.verify {
        let back = attackgen::read_scenario(&args.out).map_err(CliError::runtime)?;
        let problems = verify_scenario(&c, &back);
        if !problems.is_empty() {
            return Err(CliError {
                code: 4,
                message: format!("verification failed: {}", problems.join("; ")),
            });
        }
        progress(quiet, "verify: ok");
    }
    Ok(())
}

/// Check a scenario against the generation rules, independently of the
/// generator: pool recomputed from the corpus, tags within it, post count
/// and sizes as configured.
pub fn verify_scenario(c: &Corpus, s: &attackgen::AttackScenario) -> Vec<String> {
    let mut problems = Vec::new();
    let expected_pool = match &s.target_resource_id {
        None => Ok(attackgen::overload_pool(c, s.config.n_popular_tags)),
        Some(t) => attackgen::piggyback_pool(c, t, s.config.n_popular_tags),
    };
    match expected_pool {
        Ok(p) if p == s.pool => {}
        Ok(_) => problems.push("declared pool differs from the corpus pool".to_string()),
        Err(e) => problems.push(e.to_string()),
    }
    let pool: BTreeSet<&str> = s.pool.iter().map(|t| t.as_str()).collect();
    let expected_n = attackgen::scaled_count(s.config.attack_size, c.legitimate_count());
    if s.bogus_posts.len() != expected_n {
        problems.push(format!("{} posts, expected {expected_n}", s.bogus_posts.len()));
    }
    for p in &s.bogus_posts {
        if let Some(t) = p.tags().iter().find(|t| !pool.contains(t.as_str())) {
            problems.push(format!("tag `{}` of {} is outside the pool", t.as_str(), p.user_id()));
        }
        if p.len() > s.config.max_size {
            problems.push(format!("{} has {} tags (max {})", p.user_id(), p.len(), s.config.max_size));
        }
        if p.resource_id() != s.bogus_resource_id() {
            problems.push(format!("{} annotates {}", p.user_id(), p.resource_id()));
        }
    }
    problems
}

fn load_params(path: Option<&Path>) -> CliResult<ClassifierParams> {
    match path {
        None => Ok(ClassifierParams::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text).map_err(Error::from)?)
        }
    }
}

pub fn cmd_train(args: &TrainArgs, quiet: bool) -> CliResult<()> {
    let params = load_params(args.params.as_deref())?;
    let c = corpus::load_posts(&args.corpus)?;
    let legit = Corpus::new(c.legitimate_posts().cloned().collect());
    let mut posts = legit.posts().to_vec();
    match &args.bogus {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| Error::io(p, e))?;
            let bogus = corpus::parse_posts(io::BufReader::new(file), Label::Bogus)?;
            posts.extend(bogus.into_posts());
        }
        None => {
            if !(0.0..=1.0).contains(&args.ratio) {
                return Err(CliError::usage(format!("--ratio must lie in [0, 1], got {}", args.ratio)));
            }
            let cfg = ExperimentConfig {
                attack: args.attack.into(),
                train_injection_ratio: args.ratio,
                ..ExperimentConfig::default()
            };
            let (training, _) = evalharness::build_training_set(&legit, &cfg, seeds::derive(args.seed, "attack-train", &[]))?;
            posts = training;
        }
    }
    let kind: ClassifierKind = args.classifier.into();
    progress(quiet, format!("training {kind} on {} posts", posts.len()));
    let filter = SpamFilter::fit(kind, &posts, &params, args.seed)?;
    filter.save(&args.out).map_err(CliError::runtime)?;
    progress(quiet, format!("model written to {}", args.out.display()));
    Ok(())
}

pub fn cmd_classify(model: &Path, input: &Path, threshold: f64, out: Option<&Path>) -> CliResult<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::usage(format!("--threshold must lie in [0, 1], got {threshold}")));
    }
    let filter = SpamFilter::load(model)?;
    let c = corpus::load_posts(input)?;
    let scores = filter.score_posts(c.posts())?;
    let mut w = output(out)?;
    let target = out.unwrap_or(Path::new("<stdout>"));
    for (p, s) in c.posts().iter().zip(scores) {
        let label = match classify::Class::from_score(s, threshold) {
            classify::Class::Legitimate => "legitimate",
            classify::Class::Bogus => "bogus",
        };
        writeln!(w, "{}\t{}\t{}\t{}", p.user_id(), p.resource_id(), s, label).map_err(write_failed(target))?;
    }
    w.flush().map_err(write_failed(target))?;
    Ok(())
}

pub fn cmd_recommend(args: &RecommendArgs, quiet: bool) -> CliResult<()> {
    if args.k == 0 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let mut c = corpus::load_posts(&args.corpus)?;
    if let Some(dir) = &args.scenario {
        let s = attackgen::read_scenario(dir)?;
        c = attackgen::inject(&c, &s)?;
        progress(quiet, format!("injected {} bogus posts", s.len()));
    }
    if let Some(m) = &args.model {
        let filter = SpamFilter::load(m)?;
        let before = c.len();
        c = classify::filter_corpus(&c, &filter, args.threshold)?;
        progress(quiet, format!("filter kept {} of {before} posts", c.len()));
    }
    let table: EmbeddingTable = match &args.embeddings {
        Some(p) => vectorize::load_embeddings(p)?,
        None => vectorize::fallback_embeddings(&vectorize::build_vocab(&c, None), args.embedding_dim, args.embedding_seed)?,
    };
    let vectors = recommend::entity_vectors(&c, &table)?;
    let lists = match &args.user {
        Some(u) => {
            let seen = c.resources_by_user();
            vec![recommend::topk(u, &vectors, args.k, seen.get(u.as_str()).unwrap_or(&BTreeSet::new()))?]
        }
        None => recommend::topk_all(&c, &vectors, args.k)?,
    };
    let mut w = output(args.out.as_deref())?;
    let target = args.out.as_deref().unwrap_or(Path::new("<stdout>"));
    recommend::write_topk_tsv(&lists, &mut w).map_err(write_failed(target))?;
    w.flush().map_err(write_failed(target))?;
    Ok(())
}

pub fn cmd_experiment(
    config_path: &Path,
    out: &Path,
    jobs: Option<usize>,
    seed: Option<u64>,
    runs: Option<usize>,
    quiet: bool,
) -> CliResult<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(r) = runs {
        config.runs = r;
    }
    config.validate()?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let corpus = config.corpus.load(base)?;
    let table = config.embeddings.load(base, &corpus)?;
    progress(
        quiet,
        format!(
            "{} attack, {} posts, {} run(s), classifiers: {}",
            config.attack,
            corpus.len(),
            config.runs,
            config.classifiers.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(",")
        ),
    );
    let options = ExperimentOptions {
        jobs,
        progress: !quiet,
    };
    let report = evalharness::run_experiment(&config, &corpus, &table, &options).map_err(|e| match e {
        Error::InvalidArgument(_) | Error::Json(_) => CliError::from(e),
        other => CliError::runtime(other),
    })?;
    report::emit_report(&report, out).map_err(CliError::runtime)?;
    print_summary(&report);
    progress(quiet, format!("report written to {}", out.display()));
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    println!("classifier\tbogus_f\toverall_f");
    for c in &report.classification {
        println!("{}\t{:.4}\t{:.4}", c.classifier, c.fscore.bogus.mean, c.fscore.overall.mean);
    }
    println!();
    println!("classifier\tattack_size\taffected_before\taffected_after");
    for cell in &report.impact {
        println!(
            "{}\t{}\t{:.4}\t{:.4}",
            cell.classifier, cell.attack_size, cell.before.affected_fraction.mean, cell.after.affected_fraction.mean
        );
    }
}

pub fn cmd_report(path: &Path, format: &str, table: Table, out: Option<&Path>) -> CliResult<()> {
    let format: TableFormat = format.parse()?;
    let report = ExperimentReport::load(path)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::runtime(Error::io(dir, e)))?;
            for (name, t) in [("classification", Table::Classification), ("impact", Table::Impact)] {
                let p = dir.join(format!("{name}.{}", format.extension()));
                let f = fs::File::create(&p).map_err(|e| CliError::runtime(Error::io(&p, e)))?;
                write_table(&report, t, format, f).map_err(CliError::runtime)?;
            }
        }
        None => write_table(&report, table, format, io::stdout().lock()).map_err(CliError::runtime)?,
    }
    Ok(())
}

fn write_table<W: Write>(report: &ExperimentReport, table: Table, format: TableFormat, w: W) -> crate::Result<()> {
    match table {
        Table::Impact => report::write_impact_table(report, format, w),
        Table::Classification => report::write_classification_table(report, format, w),
    }
}
