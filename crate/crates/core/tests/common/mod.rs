//! Brute-force reference implementations shared by the integration tests.
//! They work from the definitions directly, on plain strings and dense
//! vectors, without going through the library's data structures.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use tagshield::corpus::{self, Corpus, FolksonomyPost, Label};

pub const TAGS: [&str; 8] = ["web", "news", "free", "music", "video", "blog", "tools", "photo"];

/// 50 labeled posts over 8 tags; bogus posts lean on the first four tags.
pub fn hand_corpus() -> Vec<FolksonomyPost> {
    (0..50)
        .map(|i| {
            let bogus = i % 5 < 2;
            let mask = if bogus { (i * 37 + 11) % 15 + 1 } else { (i * 53 + 7) % 255 + 1 };
            let mask = if bogus { mask | ((i % 3) << 4) } else { mask };
            let tags: Vec<&str> = (0..8).filter(|b| mask & (1 << b) != 0).map(|b| TAGS[b]).collect();
            let label = if bogus { Label::Bogus } else { Label::Legitimate };
            FolksonomyPost::from_raw(&format!("u{i}"), &format!("r{i}"), &tags, label).unwrap()
        })
        .collect()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture() -> Corpus {
    corpus::load_posts(fixture_path("posts200.tsv")).unwrap()
}

pub fn tag_strings(p: &FolksonomyPost) -> BTreeSet<String> {
    p.tags().iter().map(|t| t.as_str().to_string()).collect()
}

/// Bernoulli NB posterior `[P(bogus|x), P(legit|x)]` computed straight
/// from counts. `train` pairs each example's present features with
/// `is_bogus`.
pub fn nb_posterior_oracle(train: &[(BTreeSet<usize>, bool)], dims: usize, alpha: f64, x: &BTreeSet<usize>) -> [f64; 2] {
    let mut log_joint = [0.0f64; 2];
    for (c, want_bogus) in [(0usize, true), (1usize, false)] {
        let members: Vec<&BTreeSet<usize>> = train.iter().filter(|(_, b)| *b == want_bogus).map(|(f, _)| f).collect();
        let n_c = members.len() as f64;
        let mut lp = (n_c / train.len() as f64).ln();
        for t in 0..dims {
            let n_tc = members.iter().filter(|f| f.contains(&t)).count() as f64;
            let p = (n_tc + alpha) / (n_c + 2.0 * alpha);
            lp += if x.contains(&t) { p.ln() } else { (1.0 - p).ln() };
        }
        log_joint[c] = lp;
    }
    let m = log_joint[0].max(log_joint[1]);
    let z = (log_joint[0] - m).exp() + (log_joint[1] - m).exp();
    let log_z = m + z.ln();
    [(log_joint[0] - log_z).exp(), (log_joint[1] - log_z).exp()]
}

/// Smoothed idf, binary tf, L2-normalized, keyed by tag string.
pub fn tfidf_oracle(docs: &[BTreeSet<String>], doc: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let n = docs.len() as f64;
    let mut raw = BTreeMap::new();
    for t in doc {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        if df == 0.0 {
            continue;
        }
        raw.insert(t.clone(), ((1.0 + n) / (1.0 + df)).ln() + 1.0);
    }
    let norm = raw.values().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter()
        .map(|(t, v)| (t, if norm > 0.0 { v / norm } else { 0.0 }))
        .collect()
}

pub fn mean(vs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if vs.is_empty() {
        return out;
    }
    for v in vs {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    out.iter().map(|o| o / vs.len() as f64).collect()
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exhaustive descending sort with ascending-id tie break, truncated to k.
pub fn topk_oracle(user: &[f64], resources: &BTreeMap<String, Vec<f64>>, exclude: &BTreeSet<String>, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = resources
        .iter()
        .filter(|(r, _)| !exclude.contains(*r))
        .map(|(r, v)| (r.clone(), cosine_oracle(user, v)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Total-variation distance between two histograms of counts.
pub fn tv_distance(a: &BTreeMap<usize, usize>, b: &BTreeMap<usize, f64>) -> f64 {
    let na: usize = a.values().sum();
    let keys: BTreeSet<usize> = a.keys().chain(b.keys()).copied().collect();
    0.5 * keys
        .iter()
        .map(|k| {
            let pa = *a.get(k).unwrap_or(&0) as f64 / na as f64;
            let pb = *b.get(k).unwrap_or(&0.0);
            (pa - pb).abs()
        })
        .sum::<f64>()
}

/// Outcome of comparing the library's TF-IDF top-k against the oracle.
#[derive(Debug, Default)]
pub struct TopkCheck {
    pub lists: usize,
    pub rank_mismatches: usize,
    pub max_tfidf_err: f64,
    pub max_score_err: f64,
}

/// Builds TF-IDF entity vectors (mean of post vectors) with the library
/// and with the oracle, then compares every user's top-k.
pub fn check_tfidf_topk(c: &Corpus, k: usize) -> TopkCheck {
    use tagshield::recommend::{self, EntityVectors};
    use tagshield::vectorize;

    let vocab = vectorize::build_vocab(c, None);
    let idf = vectorize::tfidf_fit(c.posts(), &vocab).unwrap();
    let docs: Vec<BTreeSet<String>> = c.posts().iter().map(tag_strings).collect();
    let dim = vocab.len();

    let mut out = TopkCheck::default();
    let mut lib_posts = Vec::new();
    let mut ora_posts = Vec::new();
    for (p, d) in c.posts().iter().zip(&docs) {
        let lib = vectorize::tfidf_transform(p, &vocab, &idf).unwrap().to_dense();
        let ora_map = tfidf_oracle(&docs, d);
        let mut ora = vec![0.0; dim];
        for (t, v) in &ora_map {
            let i = vocab.index_of(&tagshield::corpus::Tag::new(t).unwrap()).unwrap();
            ora[i] = *v;
        }
        for (a, b) in lib.iter().zip(&ora) {
            out.max_tfidf_err = out.max_tfidf_err.max((a - b).abs());
        }
        lib_posts.push(lib);
        ora_posts.push(ora);
    }

    let group = |vs: &[Vec<f64>], key: &dyn Fn(&FolksonomyPost) -> String| {
        let mut m: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        for (p, v) in c.posts().iter().zip(vs) {
            m.entry(key(p)).or_default().push(v.clone());
        }
        m.into_iter().map(|(k, v)| (k, mean(&v, dim))).collect::<BTreeMap<_, _>>()
    };
    let by_user = |p: &FolksonomyPost| p.user_id().to_string();
    let by_res = |p: &FolksonomyPost| p.resource_id().to_string();
    let lib_vectors = EntityVectors::new(dim, group(&lib_posts, &by_user), group(&lib_posts, &by_res)).unwrap();
    let ora_users = group(&ora_posts, &by_user);
    let ora_res = group(&ora_posts, &by_res);

    let lists = recommend::topk_all(c, &lib_vectors, k).unwrap();
    for l in &lists {
        let exclude: BTreeSet<String> = c
            .posts()
            .iter()
            .filter(|p| p.user_id() == l.user_id)
            .map(|p| p.resource_id().to_string())
            .collect();
        let want = topk_oracle(&ora_users[&l.user_id], &ora_res, &exclude, k);
        out.lists += 1;
        let ids: Vec<&str> = l.entries.iter().map(|(r, _)| r.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|(r, _)| r.as_str()).collect();
        if ids != want_ids {
            out.rank_mismatches += 1;
        }
        for ((_, a), (_, b)) in l.entries.iter().zip(&want) {
            out.max_score_err = out.max_score_err.max((a - b).abs());
        }
    }
    out
}
