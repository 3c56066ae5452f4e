//! Numeric views of folksonomies: binary count vectors, TF-IDF vectors,
//! padded token-id sequences, and averaged tag embeddings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FolksonomyPost, Tag};
use crate::error::{Error, Result};
use crate::seeds;

pub const DEFAULT_SEQUENCE_LEN: usize = 50;
pub const DEFAULT_EMBEDDING_DIM: usize = 300;

/// Bijection between tags and `0..V`, ordered by descending document
/// frequency with lexical tie-break.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagVocabulary {
    terms: Vec<Tag>,
    index: HashMap<Tag, usize>,
    fingerprint: u64,
}

impl TagVocabulary {
    pub fn build(posts: &[FolksonomyPost], max_terms: Option<usize>) -> Self {
        let mut df: HashMap<&Tag, usize> = HashMap::new();
        for p in posts {
            for t in p.tags() {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&Tag, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(m) = max_terms {
            ranked.truncate(m);
        }
        Self::from_terms(ranked.into_iter().map(|(t, _)| t.clone()).collect())
    }

    /// Vocabulary with an explicit term order. Duplicates keep their first
    /// position.
    pub fn from_terms(terms: Vec<Tag>) -> Self {
        let mut index = HashMap::with_capacity(terms.len());
        let mut kept = Vec::with_capacity(terms.len());
        for t in terms {
            if !index.contains_key(&t) {
                index.insert(t.clone(), kept.len());
                kept.push(t);
            }
        }
        let joined: Vec<&str> = kept.iter().map(Tag::as_str).collect();
        let fingerprint = seeds::fnv1a(joined.join("\n").as_bytes());
        TagVocabulary {
            terms: kept,
            index,
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, tag: &Tag) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, i: usize) -> Option<&Tag> {
        self.terms.get(i)
    }

    pub fn terms(&self) -> &[Tag] {
        &self.terms
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

pub fn build_vocab(corpus: &Corpus, max_terms: Option<usize>) -> TagVocabulary {
    TagVocabulary::build(corpus.posts(), max_terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dims: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Entries are sorted, zeros dropped. Duplicate or out-of-range
    /// indices are rejected.
    pub fn new(dims: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate index {}", w[0].0)));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: i + 1,
                });
            }
        }
        Ok(SparseVector { dims, entries })
    }

    pub fn zeros(dims: usize) -> Self {
        SparseVector {
            dims,
            entries: Vec::new(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dims];
        for &(i, v) in &self.entries {
            d[i] = v;
        }
        d
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, v)| v.is_finite())
    }
}

fn vocab_indices(post: &FolksonomyPost, vocab: &TagVocabulary) -> Vec<usize> {
    let mut idx: Vec<usize> = post.tags().iter().filter_map(|t| vocab.index_of(t)).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

/// Binary indicator vector; out-of-vocabulary tags are dropped.
pub fn count_vector(post: &FolksonomyPost, vocab: &TagVocabulary) -> SparseVector {
    SparseVector {
        dims: vocab.len(),
        entries: vocab_indices(post, vocab).into_iter().map(|i| (i, 1.0)).collect(),
    }
}

/// Smoothed inverse document frequencies, `ln((1+N)/(1+df)) + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdfWeights(pub Vec<f64>);

impl IdfWeights {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn idf_value(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn tfidf_fit(posts: &[FolksonomyPost], vocab: &TagVocabulary) -> Result<IdfWeights> {
    if posts.is_empty() {
        return Err(Error::Empty);
    }
    let mut df = vec![0usize; vocab.len()];
    for p in posts {
        for i in vocab_indices(p, vocab) {
            df[i] += 1;
        }
    }
    Ok(IdfWeights(df.into_iter().map(|d| idf_value(posts.len(), d)).collect()))
}

/// `tf * idf`, L2-normalized. A post with no in-vocabulary tag maps to the
/// zero vector.
pub fn tfidf_transform(post: &FolksonomyPost, vocab: &TagVocabulary, idf: &IdfWeights) -> Result<SparseVector> {
    if idf.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            found: idf.len(),
        });
    }
    let mut entries: Vec<(usize, f64)> = vocab_indices(post, vocab)
        .into_iter()
        .map(|i| (i, idf.0[i]))
        .collect();
    let norm = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    Ok(SparseVector {
        dims: vocab.len(),
        entries,
    })
}

/// Fixed-length id sequence: 0 is padding, vocabulary ids are shifted by 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of leading positions up to and including the last non-padding id.
    pub fn content_len(&self) -> usize {
        self.ids.iter().rposition(|&i| i != 0).map_or(0, |p| p + 1)
    }

    pub fn padding(&self) -> usize {
        self.ids.iter().filter(|&&i| i == 0).count()
    }
}

pub fn token_sequence(post: &FolksonomyPost, vocab: &TagVocabulary, len: usize) -> TokenSequence {
    let mut ids: Vec<u32> = post
        .tags()
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .take(len)
        .map(|i| (i + 1) as u32)
        .collect();
    ids.resize(len, 0);
    TokenSequence { ids }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OovPolicy {
    /// Tags missing from the table are ignored.
    Skip,
    /// Tags missing from the table get a deterministic pseudo-random unit
    /// vector seeded by the tag text and `seed`.
    HashFallback { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<Tag, Vec<f64>>,
    /// Tokens in file order, for stable re-serialization.
    order: Vec<Tag>,
    oov_policy: OovPolicy,
}

impl EmbeddingTable {
    pub fn new(dim: usize, oov_policy: OovPolicy) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            order: Vec::new(),
            oov_policy,
        }
    }

    /// Insert a vector; the first insertion of a tag wins.
    pub fn insert(&mut self, tag: Tag, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for `{tag}`")));
        }
        if self.vectors.contains_key(&tag) {
            return Ok(false);
        }
        self.order.push(tag.clone());
        self.vectors.insert(tag, vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn set_oov_policy(&mut self, policy: OovPolicy) {
        self.oov_policy = policy;
    }

    pub fn get(&self, tag: &Tag) -> Option<&[f64]> {
        self.vectors.get(tag).map(Vec::as_slice)
    }

    /// Vector for `tag` under the table's OOV policy.
    pub fn resolve(&self, tag: &Tag) -> Option<std::borrow::Cow<'_, [f64]>> {
        match (self.vectors.get(tag), self.oov_policy) {
            (Some(v), _) => Some(std::borrow::Cow::Borrowed(v)),
            (None, OovPolicy::Skip) => None,
            (None, OovPolicy::HashFallback { seed }) => {
                Some(std::borrow::Cow::Owned(fallback_vector(tag, self.dim, seed)))
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tag, &[f64])> {
        self.order.iter().map(move |t| (t, self.vectors[t].as_slice()))
    }
}

/// Parse the textual word-vector format: a `<count> <dim>` header, then
/// one `<token> <f1> ... <f_dim>` line per entry.
pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut lines = reader.lines().enumerate();
    let (count, dim) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Empty);
        };
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [c, d] => c.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some((c, d)) if d >= 1 => break (c, d),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected `<count> <dim>` header".into(),
                })
            }
        }
    };
    let mut table = EmbeddingTable::new(dim, OovPolicy::Skip);
    let mut rows = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let token = parts.next().unwrap_or_default();
        let values = parts
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                message: format!("non-numeric component: {e}"),
            })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {dim} components, found {}", values.len()),
            });
        }
        rows += 1;
        if let Some(tag) = Tag::new(token) {
            table.insert(tag, values).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        }
    }
    if rows != count {
        return Err(Error::Parse {
            line: 1,
            message: format!("header declares {count} vectors, file has {rows}"),
        });
    }
    Ok(table)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(BufReader::new(file))
}

pub fn write_embeddings<W: Write>(table: &EmbeddingTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (tag, v) in table.iter() {
        write!(out, "{tag}")?;
        for x in v {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Deterministic pseudo-random unit vector for `tag`.
pub fn fallback_vector(tag: &Tag, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seeds::splitmix64(seeds::fnv1a(tag.as_str().as_bytes()) ^ seeds::splitmix64(seed)));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Table of fallback vectors for every vocabulary tag, resolving any other
/// tag the same way.
pub fn fallback_embeddings(vocab: &TagVocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::invalid("embedding dim must be >= 1"));
    }
    let mut table = EmbeddingTable::new(dim, OovPolicy::HashFallback { seed });
    for t in vocab.terms() {
        table.insert(t.clone(), fallback_vector(t, dim, seed))?;
    }
    Ok(table)
}

/// Mean embedding of the post's resolvable tags; zero if none resolve.
pub fn post_vector(post: &FolksonomyPost, table: &EmbeddingTable) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in post.tags() {
        if let Some(v) = table.resolve(t) {
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        let inv = n as f64;
        for s in &mut sum {
            *s /= inv;
        }
    }
    sum
}
