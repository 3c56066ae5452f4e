//! Folksonomy posts, corpora, and the statistics attack generation needs.
//!
//! A post is one `(user, resource, tag-set)` annotation. Posts are read
//! from a tab-separated file, one per line:
//!
//! ```text
//! user_id<TAB>resource_id<TAB>tag1,tag2,...
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Repeated
//! `(user, resource)` lines are merged by tag-set union.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// A normalized tag: trimmed, lowercased, internal whitespace runs
/// collapsed to `_`. Never empty and never contains `,`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Tag(String);

impl Tag {
    pub fn new(raw: &str) -> Option<Tag> {
        let text = raw
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join("_");
        if text.is_empty() || text.contains(',') {
            None
        } else {
            Some(Tag(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Tag {
    type Error = String;

    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        Tag::new(&value).ok_or_else(|| format!("invalid tag `{value}`"))
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> String {
        t.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legitimate,
    Bogus,
    Unlabeled,
}

/// One annotation event. Tags keep insertion order with duplicates removed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolksonomyPost {
    user_id: String,
    resource_id: String,
    tags: Vec<Tag>,
    label: Label,
}

impl FolksonomyPost {
    pub fn new(
        user_id: impl Into<String>,
        resource_id: impl Into<String>,
        tags: impl IntoIterator<Item = Tag>,
        label: Label,
    ) -> Result<Self> {
        let user_id = user_id.into();
        let resource_id = resource_id.into();
        check_id(&user_id, "user id")?;
        check_id(&resource_id, "resource id")?;
        let mut out: Vec<Tag> = Vec::new();
        for t in tags {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(Error::invalid(format!(
                "post ({user_id}, {resource_id}) has no tags"
            )));
        }
        Ok(FolksonomyPost {
            user_id,
            resource_id,
            tags: out,
            label,
        })
    }

    /// Convenience constructor from raw strings; tags are normalized and
    /// unusable ones dropped.
    pub fn from_raw(user_id: &str, resource_id: &str, tags: &[&str], label: Label) -> Result<Self> {
        Self::new(user_id, resource_id, tags.iter().filter_map(|t| Tag::new(t)), label)
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn resource_id(&self) -> &str {
        &self.resource_id
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.tags.contains(tag)
    }

    fn merge_tags(&mut self, other: &[Tag]) {
        for t in other {
            if !self.tags.contains(t) {
                self.tags.push(t.clone());
            }
        }
    }
}

fn check_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) || id != id.trim() {
        return Err(Error::invalid(format!("{what} `{id}` is empty or contains whitespace")));
    }
    Ok(())
}

/// A collection of posts. User, resource, and vocabulary sets are derived
/// from the posts at construction and the corpus is immutable afterwards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    posts: Vec<FolksonomyPost>,
    users: BTreeSet<String>,
    resources: BTreeSet<String>,
    vocabulary: BTreeSet<Tag>,
}

impl Corpus {
    pub fn new(posts: Vec<FolksonomyPost>) -> Self {
        let mut users = BTreeSet::new();
        let mut resources = BTreeSet::new();
        let mut vocabulary = BTreeSet::new();
        for p in &posts {
            users.insert(p.user_id.clone());
            resources.insert(p.resource_id.clone());
            vocabulary.extend(p.tags.iter().cloned());
        }
        Corpus {
            posts,
            users,
            resources,
            vocabulary,
        }
    }

    pub fn posts(&self) -> &[FolksonomyPost] {
        &self.posts
    }

    pub fn into_posts(self) -> Vec<FolksonomyPost> {
        self.posts
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn resources(&self) -> &BTreeSet<String> {
        &self.resources
    }

    pub fn vocabulary(&self) -> &BTreeSet<Tag> {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn legitimate_posts(&self) -> impl Iterator<Item = &FolksonomyPost> {
        self.posts.iter().filter(|p| p.label == Label::Legitimate)
    }

    pub fn legitimate_count(&self) -> usize {
        self.legitimate_posts().count()
    }

    /// Users with at least one legitimate post.
    pub fn legitimate_users(&self) -> BTreeSet<String> {
        self.legitimate_posts().map(|p| p.user_id.clone()).collect()
    }

    /// Resources each user has annotated.
    pub fn resources_by_user(&self) -> HashMap<&str, BTreeSet<&str>> {
        let mut out: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for p in &self.posts {
            out.entry(p.user_id.as_str())
                .or_default()
                .insert(p.resource_id.as_str());
        }
        out
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.posts.iter().filter(|p| p.label == label).count()
    }

    /// Order-independent fingerprint of the corpus content.
    pub fn fingerprint(&self) -> u64 {
        let mut lines: Vec<String> = self.posts.iter().map(post_line).collect();
        lines.sort();
        seeds::fnv1a(lines.join("\n").as_bytes())
    }
}

fn post_line(p: &FolksonomyPost) -> String {
    let tags: Vec<&str> = p.tags.iter().map(Tag::as_str).collect();
    format!("{}\t{}\t{}", p.user_id, p.resource_id, tags.join(","))
}

/// Parse posts from TSV text. All posts are labeled `label`.
pub fn parse_posts<R: BufRead>(reader: R, label: Label) -> Result<Corpus> {
    let mut posts: Vec<FolksonomyPost> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let post = parse_line(line, label).map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        let key = (post.user_id.clone(), post.resource_id.clone());
        match seen.get(&key) {
            Some(&idx) => posts[idx].merge_tags(&post.tags),
            None => {
                seen.insert(key, posts.len());
                posts.push(post);
            }
        }
    }
    if posts.is_empty() {
        return Err(Error::Empty);
    }
    Ok(Corpus::new(posts))
}

fn parse_line(line: &str, label: Label) -> std::result::Result<FolksonomyPost, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated fields, found {}", fields.len()));
    }
    let user = fields[0].trim();
    let resource = fields[1].trim();
    if user.is_empty() || resource.is_empty() {
        return Err("empty user or resource id".into());
    }
    let tags: Vec<Tag> = fields[2].split(',').filter_map(Tag::new).collect();
    if tags.is_empty() {
        return Err("no tags".into());
    }
    FolksonomyPost::new(user, resource, tags, label).map_err(|e| e.to_string())
}

/// Load a TSV post file; every post is labeled legitimate.
pub fn load_posts(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_posts(BufReader::new(file), Label::Legitimate)
}

pub fn write_posts<W: Write>(posts: &[FolksonomyPost], mut out: W) -> std::io::Result<()> {
    for p in posts {
        writeln!(out, "{}", post_line(p))?;
    }
    Ok(())
}

pub fn save_posts(posts: &[FolksonomyPost], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_posts(posts, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Sub-corpus with every post of `n_users` users drawn uniformly without
/// replacement.
pub fn sample_users(corpus: &Corpus, n_users: usize, seed: u64) -> Result<Corpus> {
    let total = corpus.users.len();
    if n_users == 0 || n_users > total {
        return Err(Error::invalid(format!(
            "n_users must be in [1, {total}], got {n_users}"
        )));
    }
    let users: Vec<&String> = corpus.users.iter().collect();
    let mut rng = seeds::rng(seed);
    let chosen: BTreeSet<&str> = index::sample(&mut rng, total, n_users)
        .into_iter()
        .map(|i| users[i].as_str())
        .collect();
    let posts = corpus
        .posts
        .iter()
        .filter(|p| chosen.contains(p.user_id.as_str()))
        .cloned()
        .collect();
    Ok(Corpus::new(posts))
}

fn rank_counts<K: Ord + Clone>(counts: HashMap<K, usize>) -> Vec<(K, usize)> {
    let mut v: Vec<(K, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Tags ranked by the number of legitimate posts containing them,
/// descending, ties by ascending tag text.
pub fn tag_popularity(corpus: &Corpus) -> Vec<(Tag, usize)> {
    let mut counts: HashMap<Tag, usize> = HashMap::new();
    for p in corpus.legitimate_posts() {
        for t in &p.tags {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    rank_counts(counts)
}

/// Resources ranked by legitimate post count, ties by ascending id.
pub fn resource_popularity(corpus: &Corpus) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in corpus.legitimate_posts() {
        *counts.entry(p.resource_id.clone()).or_default() += 1;
    }
    rank_counts(counts)
}

/// Empirical distribution of post sizes (tag counts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    histogram: BTreeMap<usize, f64>,
}

impl SizeDistribution {
    pub fn from_counts(counts: &BTreeMap<usize, usize>) -> Result<Self> {
        let total: usize = counts.iter().filter(|(&s, _)| s >= 1).map(|(_, &c)| c).sum();
        if total == 0 {
            return Err(Error::invalid("size distribution needs at least one observation"));
        }
        let histogram = counts
            .iter()
            .filter(|(&s, &c)| s >= 1 && c > 0)
            .map(|(&s, &c)| (s, c as f64 / total as f64))
            .collect();
        Ok(SizeDistribution { histogram })
    }

    pub fn histogram(&self) -> &BTreeMap<usize, f64> {
        &self.histogram
    }

    pub fn probability(&self, size: usize) -> f64 {
        self.histogram.get(&size).copied().unwrap_or(0.0)
    }

    pub fn max_size(&self) -> usize {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// Restrict to sizes `<= max_size` and renormalize. If no mass remains
    /// the result is a point mass at `max_size`.
    pub fn truncated(&self, max_size: usize) -> SizeDistribution {
        let kept: BTreeMap<usize, f64> = self
            .histogram
            .iter()
            .filter(|(&s, _)| s <= max_size)
            .map(|(&s, &p)| (s, p))
            .collect();
        let mass: f64 = kept.values().sum();
        if kept.is_empty() || mass <= 0.0 {
            return SizeDistribution {
                histogram: BTreeMap::from([(max_size.max(1), 1.0)]),
            };
        }
        SizeDistribution {
            histogram: kept.into_iter().map(|(s, p)| (s, p / mass)).collect(),
        }
    }

    /// Inverse-CDF lookup for `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (&s, &p) in &self.histogram {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.max_size()
    }

    pub fn total_variation(&self, other: &SizeDistribution) -> f64 {
        let keys: BTreeSet<usize> = self
            .histogram
            .keys()
            .chain(other.histogram.keys())
            .copied()
            .collect();
        0.5 * keys
            .into_iter()
            .map(|k| (self.probability(k) - other.probability(k)).abs())
            .sum::<f64>()
    }
}

/// Size distribution of the legitimate posts.
pub fn size_distribution(corpus: &Corpus) -> Result<SizeDistribution> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in corpus.legitimate_posts() {
        *counts.entry(p.len()).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::invalid("corpus has no legitimate posts"));
    }
    SizeDistribution::from_counts(&counts)
}
