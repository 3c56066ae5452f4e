use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attackgen::AttackKind;
use crate::classify::{ClassifierKind, ClassifierParams};
use crate::corpus::{self, Corpus};
use crate::error::{Error, Result};
use crate::synth::{self, SynthConfig};
use crate::vectorize::{self, EmbeddingTable, DEFAULT_EMBEDDING_DIM};

/// Where the posts come from. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum CorpusSource {
    File(PathBuf),
    Synthetic(SynthConfig),
}

impl Default for CorpusSource {
    fn default() -> Self {
        CorpusSource::Synthetic(SynthConfig::default())
    }
}

impl CorpusSource {
    pub fn load(&self, base_dir: &Path) -> Result<Corpus> {
        match self {
            CorpusSource::File(p) => corpus::load_posts(base_dir.join(p)),
            CorpusSource::Synthetic(cfg) => synth::synthetic_corpus(cfg),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FallbackEmbeddings {
    pub dim: usize,
    pub seed: u64,
}

/// Embedding table for the recommender. The fallback derives a fixed
/// pseudo-random unit vector per tag, so runs need no external files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSource {
    File(PathBuf),
    Fallback(FallbackEmbeddings),
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Fallback(FallbackEmbeddings {
            dim: DEFAULT_EMBEDDING_DIM,
            seed: 0,
        })
    }
}

impl EmbeddingSource {
    /// The fallback table is materialized for `corpus`'s vocabulary and
    /// derives vectors on the fly for any other tag.
    pub fn load(&self, base_dir: &Path, corpus: &Corpus) -> Result<EmbeddingTable> {
        match self {
            EmbeddingSource::File(p) => vectorize::load_embeddings(base_dir.join(p)),
            EmbeddingSource::Fallback(f) => {
                vectorize::fallback_embeddings(&vectorize::build_vocab(corpus, None), f.dim, f.seed)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub attack: AttackKind,
    pub classifiers: Vec<ClassifierKind>,
    /// Bogus posts appended to the training set, as a fraction of the
    /// legitimate post count.
    pub train_injection_ratio: f64,
    pub attack_sizes: Vec<f64>,
    pub k: usize,
    pub folds: usize,
    pub runs: usize,
    pub seed: u64,
    pub n_popular_tags: usize,
    pub max_size: usize,
    /// Target of the piggyback attack; the most popular resource if unset.
    pub target_resource: Option<String>,
    /// Posts scoring below this are filtered out.
    pub threshold: f64,
    pub n_users: Option<usize>,
    pub corpus: CorpusSource,
    pub embeddings: EmbeddingSource,
    pub params: ClassifierParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            attack: AttackKind::Overload,
            classifiers: ClassifierKind::ALL.to_vec(),
            train_injection_ratio: 0.30,
            attack_sizes: vec![0.001, 0.005, 0.01, 0.05, 0.10],
            k: 15,
            folds: 10,
            runs: 5,
            seed: 0,
            n_popular_tags: 75,
            max_size: 50,
            target_resource: None,
            threshold: 0.5,
            n_users: None,
            corpus: CorpusSource::default(),
            embeddings: EmbeddingSource::default(),
            params: ClassifierParams::default(),
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        unit_interval("train_injection_ratio", self.train_injection_ratio)?;
        unit_interval("threshold", self.threshold)?;
        for &s in &self.attack_sizes {
            unit_interval("attack size", s)?;
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        if self.runs < 1 {
            return Err(Error::invalid("runs must be >= 1"));
        }
        if self.k < 1 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.n_popular_tags < 1 || self.max_size < 1 {
            return Err(Error::invalid("n_popular_tags and max_size must be >= 1"));
        }
        if self.classifiers.is_empty() {
            return Err(Error::invalid("at least one classifier is required"));
        }
        for (i, c) in self.classifiers.iter().enumerate() {
            if self.classifiers[..i].contains(c) {
                return Err(Error::invalid(format!("classifier {c} listed twice")));
            }
        }
        for (i, s) in self.attack_sizes.iter().enumerate() {
            if self.attack_sizes[..i].contains(s) {
                return Err(Error::invalid(format!("attack size {s} listed twice")));
            }
        }
        if self.n_users == Some(0) {
            return Err(Error::invalid("n_users must be >= 1 when set"));
        }
        if let CorpusSource::Synthetic(s) = &self.corpus {
            s.validate()?;
        }
        if let EmbeddingSource::Fallback(f) = &self.embeddings {
            if f.dim == 0 {
                return Err(Error::invalid("embedding dim must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.k, 15);
        assert_eq!(cfg.train_injection_ratio, 0.30);
    }

    #[test]
    fn parses_sources() {
        let cfg = ExperimentConfig::from_json(
            r#"{"attack": "piggyback", "classifiers": ["nb"], "corpus": {"file": "posts.tsv"},
                "embeddings": {"fallback": {"dim": 8, "seed": 3}}, "runs": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.attack, AttackKind::Piggyback);
        assert_eq!(cfg.corpus, CorpusSource::File("posts.tsv".into()));
        assert_eq!(cfg.embeddings, EmbeddingSource::Fallback(FallbackEmbeddings { dim: 8, seed: 3 }));
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            r#"{"folds": 1}"#,
            r#"{"runs": 0}"#,
            r#"{"attack_sizes": [1.5]}"#,
            r#"{"train_injection_ratio": -0.1}"#,
            r#"{"classifiers": []}"#,
            r#"{"classifiers": ["nb", "nb"]}"#,
            r#"{"bogus_field": 1}"#,
            r#"{"attack": "sybil"}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }
}
