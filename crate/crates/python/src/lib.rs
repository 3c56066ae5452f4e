//! Python bindings: corpora, attack generation, spam filters, top-k
//! recommendation and the experiment runner.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use tagshield::attackgen::{self, AttackConfig, AttackKind};
use tagshield::classify::{ClassifierKind, ClassifierParams, PostScorer};
use tagshield::corpus::{self, FolksonomyPost, Label};
use tagshield::evalharness::{self, ExperimentConfig, ExperimentOptions};
use tagshield::recommend as rec;
use tagshield::{vectorize, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::UnknownUser(_) | Error::UnknownResource(_) => PyKeyError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse()
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Legitimate => "legitimate",
        Label::Bogus => "bogus",
        Label::Unlabeled => "unlabeled",
    }
}

/// An immutable set of posts.
#[pyclass(frozen, skip_from_py_object, module = "tagshield_py")]
#[derive(Clone)]
pub struct Corpus {
    inner: corpus::Corpus,
}

#[pymethods]
impl Corpus {
    /// Load a posts TSV; every post is labeled legitimate.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Corpus {
            inner: corpus::load_posts(path).map_err(py_err)?,
        })
    }

    /// Build from `(user, resource, [tags])` triples, all with `label`.
    #[staticmethod]
    #[pyo3(signature = (posts, label = "legitimate"))]
    fn from_posts(posts: Vec<(String, String, Vec<String>)>, label: &str) -> PyResult<Self> {
        let label = match label {
            "legitimate" => Label::Legitimate,
            "bogus" => Label::Bogus,
            "unlabeled" => Label::Unlabeled,
            other => return Err(PyValueError::new_err(format!("unknown label `{other}`"))),
        };
        let posts = posts
            .iter()
            .map(|(u, r, ts)| {
                let tags: Vec<&str> = ts.iter().map(String::as_str).collect();
                FolksonomyPost::from_raw(u, r, &tags, label)
            })
            .collect::<tagshield::Result<Vec<_>>>()
            .map_err(py_err)?;
        Ok(Corpus {
            inner: corpus::Corpus::new(posts),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::save_posts(self.inner.posts(), path).map_err(py_err)
    }

    /// `(user, resource, [tags], label)` per post.
    fn posts(&self) -> Vec<(String, String, Vec<String>, &'static str)> {
        self.inner
            .posts()
            .iter()
            .map(|p| {
                (
                    p.user_id().to_string(),
                    p.resource_id().to_string(),
                    p.tags().iter().map(|t| t.as_str().to_string()).collect(),
                    label_name(p.label()),
                )
            })
            .collect()
    }

    fn users(&self) -> Vec<String> {
        self.inner.users().iter().cloned().collect()
    }

    fn resources(&self) -> Vec<String> {
        self.inner.resources().iter().cloned().collect()
    }

    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary().iter().map(|t| t.as_str().to_string()).collect()
    }

    fn count(&self, label: &str) -> PyResult<usize> {
        Ok(match label {
            "legitimate" => self.inner.count_label(Label::Legitimate),
            "bogus" => self.inner.count_label(Label::Bogus),
            "unlabeled" => self.inner.count_label(Label::Unlabeled),
            other => return Err(PyValueError::new_err(format!("unknown label `{other}`"))),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(posts={}, users={}, resources={})",
            self.inner.len(),
            self.inner.users().len(),
            self.inner.resources().len()
        )
    }
}

/// Bogus posts produced by one attack.
#[pyclass(frozen, module = "tagshield_py")]
pub struct AttackScenario {
    inner: attackgen::AttackScenario,
}

#[pymethods]
impl AttackScenario {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.config.kind.as_str()
    }

    #[getter]
    fn bogus_resource(&self) -> String {
        self.inner.bogus_resource_id().to_string()
    }

    #[getter]
    fn target_resource(&self) -> Option<String> {
        self.inner.target_resource_id.clone()
    }

    #[getter]
    fn pool(&self) -> Vec<String> {
        self.inner.pool.iter().map(|t| t.as_str().to_string()).collect()
    }

    fn posts(&self) -> Corpus {
        Corpus {
            inner: corpus::Corpus::new(self.inner.bogus_posts.clone()),
        }
    }

    /// The corpus with this scenario's posts added.
    fn inject(&self, corpus: &Corpus) -> PyResult<Corpus> {
        Ok(Corpus {
            inner: attackgen::inject(&corpus.inner, &self.inner).map_err(py_err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        attackgen::write_scenario(&self.inner, dir).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (corpus, kind, size, seed = 0, target = None, n_popular_tags = 75, max_size = 50, bogus_resource = None))]
#[allow(clippy::too_many_arguments)]
fn generate_attack(
    corpus: &Corpus,
    kind: &str,
    size: f64,
    seed: u64,
    target: Option<String>,
    n_popular_tags: usize,
    max_size: usize,
    bogus_resource: Option<String>,
) -> PyResult<AttackScenario> {
    let kind: AttackKind = parse("attack kind", kind)?;
    let mut cfg = AttackConfig::new(kind, size, seed);
    cfg.target_resource_id = target;
    cfg.n_popular_tags = n_popular_tags;
    cfg.max_size = max_size;
    cfg.bogus_resource_id = bogus_resource.unwrap_or_else(|| attackgen::fresh_resource_id(&corpus.inner, "bogus"));
    cfg.validate().map_err(py_err)?;
    Ok(AttackScenario {
        inner: attackgen::generate(&corpus.inner, &cfg).map_err(py_err)?,
    })
}

/// The legitimate posts of `corpus` plus `ceil(ratio * legit)` bogus
/// posts of the given attack kind.
#[pyfunction]
#[pyo3(signature = (corpus, kind = "overload", ratio = 0.3, seed = 0))]
fn training_set(corpus: &Corpus, kind: &str, ratio: f64, seed: u64) -> PyResult<Corpus> {
    let cfg = ExperimentConfig {
        attack: parse("attack kind", kind)?,
        train_injection_ratio: ratio,
        ..ExperimentConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    let (posts, _) = evalharness::build_training_set(&corpus.inner, &cfg, seed).map_err(py_err)?;
    Ok(Corpus {
        inner: corpus::Corpus::new(posts),
    })
}

/// A trained classifier scoring posts by probability of being legitimate.
#[pyclass(frozen, module = "tagshield_py")]
pub struct SpamFilter {
    inner: tagshield::classify::SpamFilter,
}

#[pymethods]
impl SpamFilter {
    /// `kind` is `nb`, `svm` or `nn`; `params` is a JSON object with the
    /// same fields as the experiment config's `params`.
    #[staticmethod]
    #[pyo3(signature = (kind, corpus, seed = 0, params = None))]
    fn fit(py: Python<'_>, kind: &str, corpus: &Corpus, seed: u64, params: Option<&str>) -> PyResult<Self> {
        let kind: ClassifierKind = parse("classifier", kind)?;
        let params: ClassifierParams = match params {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => ClassifierParams::default(),
        };
        let posts = corpus.inner.posts();
        let inner = py
            .detach(|| tagshield::classify::SpamFilter::fit(kind, posts, &params, seed))
            .map_err(py_err)?;
        Ok(SpamFilter { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(SpamFilter {
            inner: tagshield::classify::SpamFilter::load(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    /// One score in [0, 1] per post, in corpus order.
    fn score(&self, py: Python<'_>, corpus: &Corpus) -> PyResult<Vec<f64>> {
        py.detach(|| self.inner.score_posts(corpus.inner.posts())).map_err(py_err)
    }

    /// Posts scoring at least `threshold`.
    #[pyo3(signature = (corpus, threshold = 0.5))]
    fn filter(&self, py: Python<'_>, corpus: &Corpus, threshold: f64) -> PyResult<Corpus> {
        let inner = py
            .detach(|| tagshield::classify::filter_corpus(&corpus.inner, &self.inner, threshold))
            .map_err(py_err)?;
        Ok(Corpus { inner })
    }
}

/// Top-k resources per user by cosine over mean tag embeddings, excluding
/// resources the user already annotated. Uses seeded fallback embeddings.
#[pyfunction]
#[pyo3(signature = (corpus, k = 15, embedding_dim = 300, embedding_seed = 0, users = None))]
fn recommend(
    corpus: &Corpus,
    k: usize,
    embedding_dim: usize,
    embedding_seed: u64,
    users: Option<Vec<String>>,
) -> PyResult<Vec<(String, Vec<(String, f64)>)>> {
    if k == 0 {
        return Err(PyValueError::new_err("k must be >= 1"));
    }
    let c = &corpus.inner;
    let table = vectorize::fallback_embeddings(&vectorize::build_vocab(c, None), embedding_dim, embedding_seed).map_err(py_err)?;
    let vectors = rec::entity_vectors(c, &table).map_err(py_err)?;
    let seen = c.resources_by_user();
    let none = BTreeSet::new();
    let who: Vec<String> = users.unwrap_or_else(|| c.users().iter().cloned().collect());
    who.iter()
        .map(|u| {
            let l = rec::topk(u, &vectors, k, seen.get(u.as_str()).unwrap_or(&none)).map_err(py_err)?;
            Ok((l.user_id, l.entries))
        })
        .collect()
}

/// Run a full experiment from a JSON config; relative corpus paths
/// resolve against `base_dir`. Returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, base_dir = None, jobs = None))]
fn run_experiment(py: Python<'_>, config: &str, base_dir: Option<PathBuf>, jobs: Option<usize>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config).map_err(py_err)?;
    let base = base_dir.unwrap_or_else(|| PathBuf::from("."));
    py.detach(|| {
        let corpus = cfg.corpus.load(&base)?;
        let table = cfg.embeddings.load(&base, &corpus)?;
        let options = ExperimentOptions { jobs, progress: false };
        evalharness::run_experiment(&cfg, &corpus, &table, &options)?.to_json()
    })
    .map_err(py_err)
}

#[pyfunction]
fn fscore(precision: f64, recall: f64) -> f64 {
    evalharness::fscore(precision, recall)
}

#[pymodule]
fn tagshield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Corpus>()?;
    m.add_class::<AttackScenario>()?;
    m.add_class::<SpamFilter>()?;
    m.add_function(wrap_pyfunction!(generate_attack, m)?)?;
    m.add_function(wrap_pyfunction!(training_set, m)?)?;
    m.add_function(wrap_pyfunction!(recommend, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(fscore, m)?)?;
    Ok(())
}
