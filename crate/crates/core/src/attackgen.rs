//! Overload and Piggyback profile-injection attacks.
//!
//! Each scenario promotes one fresh bogus resource. Every bogus post comes
//! from its own synthetic user; its size is drawn from the legitimate size
//! distribution truncated at `max_size`, and its tags are drawn uniformly
//! without replacement from a pool of popular tags.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, FolksonomyPost, Label, Tag};
use crate::error::{Error, Result};
use crate::seeds;

pub const DEFAULT_POPULAR_TAGS: usize = 75;
pub const DEFAULT_MAX_SIZE: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Overload,
    Piggyback,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Overload => "overload",
            AttackKind::Piggyback => "piggyback",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "overload" => Ok(AttackKind::Overload),
            "piggyback" => Ok(AttackKind::Piggyback),
            other => Err(Error::invalid(format!("unknown attack kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub n_popular_tags: usize,
    pub max_size: usize,
    pub bogus_resource_id: String,
    /// Piggyback only; defaults to the most popular resource.
    pub target_resource_id: Option<String>,
    /// Fraction of the legitimate post count.
    pub attack_size: f64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(kind: AttackKind, attack_size: f64, seed: u64) -> Self {
        AttackConfig {
            kind,
            n_popular_tags: DEFAULT_POPULAR_TAGS,
            max_size: DEFAULT_MAX_SIZE,
            bogus_resource_id: format!("bogus-{kind}-{seed:016x}"),
            target_resource_id: None,
            attack_size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_popular_tags == 0 {
            return Err(Error::invalid("n_popular_tags must be >= 1"));
        }
        if self.max_size == 0 {
            return Err(Error::invalid("max_size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.attack_size) {
            return Err(Error::invalid(format!(
                "attack size must be in [0, 1], got {}",
                self.attack_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackScenario {
    pub config: AttackConfig,
    /// Resolved target (Piggyback only).
    pub target_resource_id: Option<String>,
    /// The tags bogus posts were drawn from, in popularity order.
    pub pool: Vec<Tag>,
    pub bogus_posts: Vec<FolksonomyPost>,
}

impl AttackScenario {
    pub fn bogus_resource_id(&self) -> &str {
        &self.config.bogus_resource_id
    }

    pub fn len(&self) -> usize {
        self.bogus_posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bogus_posts.is_empty()
    }

    pub fn metadata(&self) -> ScenarioMetadata {
        ScenarioMetadata {
            kind: self.config.kind,
            seed: self.config.seed,
            attack_size: self.config.attack_size,
            n_popular_tags: self.config.n_popular_tags,
            max_size: self.config.max_size,
            pool_size: self.pool.len(),
            pool: self.pool.iter().map(|t| t.as_str().to_string()).collect(),
            target_resource: self.target_resource_id.clone(),
            bogus_resource: self.config.bogus_resource_id.clone(),
            n_posts: self.bogus_posts.len(),
        }
    }
}

/// Sidecar record written next to the scenario TSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetadata {
    pub kind: AttackKind,
    pub seed: u64,
    pub attack_size: f64,
    pub n_popular_tags: usize,
    pub max_size: usize,
    pub pool_size: usize,
    pub pool: Vec<String>,
    pub target_resource: Option<String>,
    pub bogus_resource: String,
    pub n_posts: usize,
}

/// `ceil(fraction * count)`, tolerant of binary rounding noise such as
/// `0.07 * 100 = 7.000000000000001`.
pub fn scaled_count(fraction: f64, count: usize) -> usize {
    let x = fraction * count as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Popular-tag pool for the Overload attack: take the smallest prefix of
/// the resource popularity ranking whose tags cover `n_popular_tags`
/// distinct tags, then keep the `n_popular_tags` most popular of those.
/// On corpora with fewer distinct tags the pool is all of them.
pub fn overload_pool(corpus: &Corpus, n_popular_tags: usize) -> Vec<Tag> {
    let ranked_resources = corpus::resource_popularity(corpus);
    let mut tags_of: std::collections::HashMap<&str, BTreeSet<&Tag>> = Default::default();
    for p in corpus.legitimate_posts() {
        tags_of.entry(p.resource_id()).or_default().extend(p.tags());
    }
    let mut covered: BTreeSet<&Tag> = BTreeSet::new();
    for (r, _) in &ranked_resources {
        if let Some(ts) = tags_of.get(r.as_str()) {
            covered.extend(ts.iter().copied());
        }
        if covered.len() >= n_popular_tags {
            break;
        }
    }
    corpus::tag_popularity(corpus)
        .into_iter()
        .map(|(t, _)| t)
        .filter(|t| covered.contains(t))
        .take(n_popular_tags)
        .collect()
}

/// Piggyback pool: tags on the target resource that are also among the
/// `n_popular_tags` most popular; all of the target's tags if none are.
pub fn piggyback_pool(corpus: &Corpus, target: &str, n_popular_tags: usize) -> Result<Vec<Tag>> {
    let target_tags: BTreeSet<&Tag> = corpus
        .posts()
        .iter()
        .filter(|p| p.resource_id() == target)
        .flat_map(|p| p.tags())
        .collect();
    if target_tags.is_empty() {
        return Err(Error::UnknownResource(target.to_string()));
    }
    let ranking = corpus::tag_popularity(corpus);
    let popular: Vec<Tag> = ranking
        .iter()
        .take(n_popular_tags)
        .filter(|(t, _)| target_tags.contains(t))
        .map(|(t, _)| t.clone())
        .collect();
    if !popular.is_empty() {
        return Ok(popular);
    }
    // Fall back to the whole target tag set, still in popularity order.
    let mut rest: Vec<Tag> = ranking
        .iter()
        .filter(|(t, _)| target_tags.contains(t))
        .map(|(t, _)| t.clone())
        .collect();
    for t in target_tags {
        if !rest.contains(t) {
            rest.push(t.clone());
        }
    }
    Ok(rest)
}

pub fn generate(corpus: &Corpus, config: &AttackConfig) -> Result<AttackScenario> {
    match config.kind {
        AttackKind::Overload => gen_overload(corpus, config),
        AttackKind::Piggyback => gen_piggyback(corpus, config),
    }
}

pub fn gen_overload(corpus: &Corpus, config: &AttackConfig) -> Result<AttackScenario> {
    if config.kind != AttackKind::Overload {
        return Err(Error::invalid("gen_overload requires an overload config"));
    }
    config.validate()?;
    let pool = overload_pool(corpus, config.n_popular_tags);
    if pool.is_empty() {
        return Err(Error::invalid("corpus has no legitimate tags to build a pool from"));
    }
    let posts = sample_posts(corpus, config, &pool)?;
    Ok(AttackScenario {
        config: config.clone(),
        target_resource_id: None,
        pool,
        bogus_posts: posts,
    })
}

pub fn gen_piggyback(corpus: &Corpus, config: &AttackConfig) -> Result<AttackScenario> {
    if config.kind != AttackKind::Piggyback {
        return Err(Error::invalid("gen_piggyback requires a piggyback config"));
    }
    config.validate()?;
    let target = match &config.target_resource_id {
        Some(t) => {
            if !corpus.resources().contains(t) {
                return Err(Error::UnknownResource(t.clone()));
            }
            t.clone()
        }
        None => corpus::resource_popularity(corpus)
            .into_iter()
            .next()
            .map(|(r, _)| r)
            .ok_or(Error::Empty)?,
    };
    let pool = piggyback_pool(corpus, &target, config.n_popular_tags)?;
    let posts = sample_posts(corpus, config, &pool)?;
    Ok(AttackScenario {
        config: config.clone(),
        target_resource_id: Some(target),
        pool,
        bogus_posts: posts,
    })
}

fn sample_posts(corpus: &Corpus, config: &AttackConfig, pool: &[Tag]) -> Result<Vec<FolksonomyPost>> {
    let legit = corpus.legitimate_count();
    let n = scaled_count(config.attack_size, legit);
    if n == 0 {
        return Ok(Vec::new());
    }
    let sizes = corpus::size_distribution(corpus)?.truncated(config.max_size);
    let mut rng = seeds::rng(config.seed);
    let mut posts = Vec::with_capacity(n);
    for i in 0..n {
        let size = sizes.quantile(rng.random::<f64>()).min(pool.len()).max(1);
        let tags = index::sample(&mut rng, pool.len(), size)
            .into_iter()
            .map(|j| pool[j].clone());
        let user = format!("{}#u{i}", config.bogus_resource_id);
        posts.push(FolksonomyPost::new(user, &config.bogus_resource_id, tags, Label::Bogus)?);
    }
    Ok(posts)
}

/// Mix a scenario's bogus posts into a corpus. The input is untouched.
pub fn inject(corpus: &Corpus, scenario: &AttackScenario) -> Result<Corpus> {
    if scenario.bogus_posts.is_empty() {
        return Ok(corpus.clone());
    }
    let bogus = scenario.bogus_resource_id();
    if corpus.resources().contains(bogus) {
        return Err(Error::IdCollision(bogus.to_string()));
    }
    for p in &scenario.bogus_posts {
        if corpus.users().contains(p.user_id()) {
            return Err(Error::IdCollision(p.user_id().to_string()));
        }
    }
    let mut posts = corpus.posts().to_vec();
    posts.extend(scenario.bogus_posts.iter().cloned());
    Ok(Corpus::new(posts))
}

/// Pick a bogus resource id derived from `base` that does not occur in
/// the corpus.
pub fn fresh_resource_id(corpus: &Corpus, base: &str) -> String {
    if !corpus.resources().contains(base) {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}-{i}"))
        .find(|c| !corpus.resources().contains(c))
        .expect("unbounded search")
}

pub const SCENARIO_POSTS: &str = "scenario.tsv";
pub const SCENARIO_METADATA: &str = "scenario.json";

pub fn write_scenario(scenario: &AttackScenario, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    corpus::save_posts(&scenario.bogus_posts, dir.join(SCENARIO_POSTS))?;
    let meta = serde_json::to_string_pretty(&scenario.metadata())?;
    let path = dir.join(SCENARIO_METADATA);
    fs::write(&path, meta + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_scenario(dir: impl AsRef<Path>) -> Result<AttackScenario> {
    let dir = dir.as_ref();
    let meta_path = dir.join(SCENARIO_METADATA);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ScenarioMetadata = serde_json::from_str(&text)?;
    let posts_path = dir.join(SCENARIO_POSTS);
    let file = fs::File::open(&posts_path).map_err(|e| Error::io(&posts_path, e))?;
    let bogus_posts = match corpus::parse_posts(BufReader::new(file), Label::Bogus) {
        Ok(c) => c.into_posts(),
        Err(Error::Empty) => Vec::new(),
        Err(e) => return Err(e),
    };
    let pool = meta
        .pool
        .iter()
        .map(|t| Tag::new(t).ok_or_else(|| Error::invalid(format!("bad pool tag `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackScenario {
        config: AttackConfig {
            kind: meta.kind,
            n_popular_tags: meta.n_popular_tags,
            max_size: meta.max_size,
            bogus_resource_id: meta.bogus_resource,
            target_resource_id: meta.target_resource.clone(),
            attack_size: meta.attack_size,
            seed: meta.seed,
        },
        target_resource_id: meta.target_resource,
        pool,
        bogus_posts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(u: &str, r: &str, tags: &[&str]) -> FolksonomyPost {
        FolksonomyPost::from_raw(u, r, tags, Label::Legitimate).unwrap()
    }

    fn alphabet_corpus() -> Corpus {
        let letters: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        let posts = (0..26)
            .map(|i| {
                let tags: Vec<&str> = (0..3).map(|j| letters[(i + j) % 26].as_str()).collect();
                post(&format!("u{i}"), &format!("r{}", i % 5), &tags)
            })
            .collect();
        Corpus::new(posts)
    }

    #[test]
    fn scaled_count_rounding() {
        assert_eq!(scaled_count(0.0, 1000), 0);
        assert_eq!(scaled_count(0.001, 200), 1);
        assert_eq!(scaled_count(0.07, 100), 7);
        assert_eq!(scaled_count(0.05, 200), 10);
        assert_eq!(scaled_count(0.3, 1000), 300);
        assert_eq!(scaled_count(0.015, 100), 2);
    }

    #[test]
    fn zero_size_is_empty() {
        let c = alphabet_corpus();
        for kind in [AttackKind::Overload, AttackKind::Piggyback] {
            let s = generate(&c, &AttackConfig::new(kind, 0.0, 3)).unwrap();
            assert!(s.is_empty());
            assert_eq!(inject(&c, &s).unwrap(), c);
        }
    }

    #[test]
    fn degenerate_sizes() {
        let c = alphabet_corpus();
        let mut cfg = AttackConfig::new(AttackKind::Overload, 0.5, 11);
        cfg.n_popular_tags = 26;
        let s = gen_overload(&c, &cfg).unwrap();
        assert_eq!(s.pool.len(), 26);
        assert_eq!(s.len(), 13);
        for p in &s.bogus_posts {
            assert_eq!(p.len(), 3);
            assert!(p.tags().iter().all(|t| s.pool.contains(t)));
            assert_eq!(p.label(), Label::Bogus);
        }
    }

    #[test]
    fn piggyback_restricted_to_target_tags() {
        let mut posts = vec![post("u0", "hot", &["x", "y"]), post("u1", "hot", &["x"])];
        for i in 0..10 {
            posts.push(post(&format!("v{i}"), &format!("r{i}"), &["x", "z", &format!("t{i}")]));
        }
        let c = Corpus::new(posts);
        let mut cfg = AttackConfig::new(AttackKind::Piggyback, 1.0, 5);
        cfg.target_resource_id = Some("hot".into());
        let s = gen_piggyback(&c, &cfg).unwrap();
        assert_eq!(s.target_resource_id.as_deref(), Some("hot"));
        let allowed = [Tag::new("x").unwrap(), Tag::new("y").unwrap()];
        assert!(s.bogus_posts.iter().flat_map(|p| p.tags()).all(|t| allowed.contains(t)));

        cfg.target_resource_id = Some("nope".into());
        assert!(matches!(gen_piggyback(&c, &cfg), Err(Error::UnknownResource(_))));
    }

    #[test]
    fn piggyback_fallback_to_target_tags() {
        let mut posts = vec![post("u0", "niche", &["rare"])];
        for i in 0..5 {
            posts.push(post(&format!("v{i}"), &format!("r{i}"), &["common"]));
        }
        let c = Corpus::new(posts);
        let pool = piggyback_pool(&c, "niche", 1).unwrap();
        assert_eq!(pool, [Tag::new("rare").unwrap()]);
    }

    #[test]
    fn inject_counts_and_collisions() {
        let c = Corpus::new((0..10).map(|i| post(&format!("u{i}"), "r", &["a", "b"])).collect());
        let s = generate(&c, &AttackConfig::new(AttackKind::Overload, 0.3, 1)).unwrap();
        let mixed = inject(&c, &s).unwrap();
        assert_eq!(mixed.len(), 13);
        assert_eq!(mixed.resources().len(), 2);
        assert_eq!(mixed.count_label(Label::Legitimate), 10);
        assert_eq!(mixed.count_label(Label::Bogus), 3);
        assert_eq!(c.len(), 10);

        let mut clash = AttackConfig::new(AttackKind::Overload, 0.3, 1);
        clash.bogus_resource_id = "r".into();
        let s = generate(&c, &clash).unwrap();
        assert!(matches!(inject(&c, &s), Err(Error::IdCollision(_))));
        assert_eq!(fresh_resource_id(&c, "r"), "r-1");
    }

    #[test]
    fn rejects_bad_config() {
        let c = alphabet_corpus();
        assert!(generate(&c, &AttackConfig::new(AttackKind::Overload, 1.5, 0)).is_err());
        let mut cfg = AttackConfig::new(AttackKind::Overload, 0.1, 0);
        cfg.max_size = 0;
        assert!(generate(&c, &cfg).is_err());
        assert!(gen_piggyback(&c, &AttackConfig::new(AttackKind::Overload, 0.1, 0)).is_err());
    }
}
