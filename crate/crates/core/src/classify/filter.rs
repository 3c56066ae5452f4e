//! Fitted spam filters: a trained model plus the featurizer it was trained
//! with, so whole posts can be scored and corpora filtered.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::{self, AdamConfig, NetArchitecture, NeuralNet, NnTrainingMeta, TrainSchedule};
use super::svm::{LinearSvm, SvmParams, SvmTrainingMeta};
use super::{Class, ClassifierKind, LabeledExample, NaiveBayes};
use crate::corpus::{Corpus, FolksonomyPost, Label, Tag};
use crate::error::{Error, Result};
use crate::seeds;
use crate::vectorize::{self, IdfWeights, SparseVector, TagVocabulary, TokenSequence};

pub const MODEL_FORMAT: &str = "tagshield-model";
pub const MODEL_VERSION: u32 = 1;

/// Anything that can score a post by its probability of being legitimate.
pub trait PostScorer: Sync {
    fn score_post(&self, post: &FolksonomyPost) -> Result<f64>;

    fn score_posts(&self, posts: &[FolksonomyPost]) -> Result<Vec<f64>> {
        posts.iter().map(|p| self.score_post(p)).collect()
    }
}

impl<T: PostScorer + ?Sized> PostScorer for Box<T> {
    fn score_post(&self, post: &FolksonomyPost) -> Result<f64> {
        (**self).score_post(post)
    }

    fn score_posts(&self, posts: &[FolksonomyPost]) -> Result<Vec<f64>> {
        (**self).score_posts(posts)
    }
}

/// Fitted parameters of one of the three model kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedClassifier {
    #[serde(rename = "nb")]
    NaiveBayes(NaiveBayes),
    #[serde(rename = "svm")]
    LinearSvm(LinearSvm),
    #[serde(rename = "nn")]
    NeuralNet(NeuralNet),
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedClassifier::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            TrainedClassifier::LinearSvm(_) => ClassifierKind::LinearSvm,
            TrainedClassifier::NeuralNet(_) => ClassifierKind::NeuralNet,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainingMeta {
    #[default]
    #[serde(rename = "nb")]
    NaiveBayes,
    #[serde(rename = "svm")]
    LinearSvm(SvmTrainingMeta),
    #[serde(rename = "nn")]
    NeuralNet(NnTrainingMeta),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnParams {
    pub embed_dim: usize,
    pub lstm_units: usize,
    /// Defaults to `seq_len`.
    pub dense_units: Option<usize>,
    pub seq_len: usize,
    pub mask_padding: bool,
    pub adam: AdamConfig,
    pub schedule: TrainSchedule,
}

impl Default for NnParams {
    fn default() -> Self {
        let arch = NetArchitecture::for_sequence_length(vectorize::DEFAULT_SEQUENCE_LEN);
        NnParams {
            embed_dim: arch.embed_dim,
            lstm_units: arch.lstm_units,
            dense_units: None,
            seq_len: arch.seq_len,
            mask_padding: arch.mask_padding,
            adam: AdamConfig::default(),
            schedule: TrainSchedule::default(),
        }
    }
}

impl NnParams {
    pub fn architecture(&self) -> NetArchitecture {
        NetArchitecture {
            embed_dim: self.embed_dim,
            lstm_units: self.lstm_units,
            dense_units: self.dense_units.unwrap_or(self.seq_len),
            seq_len: self.seq_len,
            mask_padding: self.mask_padding,
        }
    }
}

/// Hyperparameters for all three kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierParams {
    pub nb_alpha: f64,
    pub svm: SvmParams,
    pub nn: NnParams,
    pub max_vocab: Option<usize>,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            nb_alpha: 1.0,
            svm: SvmParams::default(),
            nn: NnParams::default(),
            max_vocab: None,
        }
    }
}

/// A trained model with its vocabulary (and IDF weights for the SVM).
#[derive(Clone, Debug, PartialEq)]
pub struct SpamFilter {
    vocab: TagVocabulary,
    idf: Option<IdfWeights>,
    seq_len: usize,
    model: TrainedClassifier,
    meta: TrainingMeta,
    seed: u64,
}

fn class_of(post: &FolksonomyPost) -> Result<Class> {
    match post.label() {
        Label::Legitimate => Ok(Class::Legitimate),
        Label::Bogus => Ok(Class::Bogus),
        Label::Unlabeled => Err(Error::invalid(format!(
            "unlabeled training post ({}, {})",
            post.user_id(),
            post.resource_id()
        ))),
    }
}

impl SpamFilter {
    /// Build a vocabulary from `posts` and train a `kind` model on them.
    /// Model-init and shuffle randomness derive from `seed`.
    pub fn fit(kind: ClassifierKind, posts: &[FolksonomyPost], params: &ClassifierParams, seed: u64) -> Result<Self> {
        if posts.is_empty() {
            return Err(Error::Empty);
        }
        let classes = posts.iter().map(class_of).collect::<Result<Vec<_>>>()?;
        let vocab = TagVocabulary::build(posts, params.max_vocab);
        let mut idf = None;
        let (model, meta) = match kind {
            ClassifierKind::NaiveBayes => {
                let examples: Vec<_> = posts
                    .iter()
                    .zip(&classes)
                    .map(|(p, &c)| LabeledExample::new(vectorize::count_vector(p, &vocab), c))
                    .collect();
                let nb = NaiveBayes::train(&examples, params.nb_alpha)?;
                (TrainedClassifier::NaiveBayes(nb), TrainingMeta::NaiveBayes)
            }
            ClassifierKind::LinearSvm => {
                let weights = vectorize::tfidf_fit(posts, &vocab)?;
                let examples = posts
                    .iter()
                    .zip(&classes)
                    .map(|(p, &c)| Ok(LabeledExample::new(vectorize::tfidf_transform(p, &vocab, &weights)?, c)))
                    .collect::<Result<Vec<_>>>()?;
                let (svm, meta) = LinearSvm::train(&examples, &params.svm, seeds::derive(seed, "shuffle", &[]))?;
                idf = Some(weights);
                (TrainedClassifier::LinearSvm(svm), TrainingMeta::LinearSvm(meta))
            }
            ClassifierKind::NeuralNet => {
                if vocab.is_empty() {
                    return Err(Error::invalid("vocabulary is empty"));
                }
                let examples: Vec<_> = posts
                    .iter()
                    .zip(&classes)
                    .map(|(p, &c)| LabeledExample::new(vectorize::token_sequence(p, &vocab, params.nn.seq_len), c))
                    .collect();
                let net = NeuralNet::init(
                    params.nn.architecture(),
                    vocab.len(),
                    seeds::derive(seed, "model-init", &[]),
                )?;
                let (net, meta) = nn::train(
                    net,
                    &examples,
                    &params.nn.adam,
                    &params.nn.schedule,
                    seeds::derive(seed, "shuffle", &[]),
                )?;
                (TrainedClassifier::NeuralNet(net), TrainingMeta::NeuralNet(meta))
            }
        };
        Ok(SpamFilter {
            vocab,
            idf,
            seq_len: params.nn.seq_len,
            model,
            meta,
            seed,
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        self.model.kind()
    }

    pub fn model(&self) -> &TrainedClassifier {
        &self.model
    }

    pub fn vocabulary(&self) -> &TagVocabulary {
        &self.vocab
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sparse_features(&self, post: &FolksonomyPost) -> Result<SparseVector> {
        match &self.idf {
            Some(idf) => vectorize::tfidf_transform(post, &self.vocab, idf),
            None => Ok(vectorize::count_vector(post, &self.vocab)),
        }
    }

    pub fn sequence(&self, post: &FolksonomyPost) -> TokenSequence {
        vectorize::token_sequence(post, &self.vocab, self.seq_len)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            seed: self.seed,
            vocabulary: self.vocab.terms().to_vec(),
            idf: self.idf.clone(),
            seq_len: self.seq_len,
            model: self.model.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model container {} v{}",
                file.format, file.version
            )));
        }
        let vocab = TagVocabulary::from_terms(file.vocabulary);
        let dims = match &file.model {
            TrainedClassifier::NaiveBayes(m) => m.dims(),
            TrainedClassifier::LinearSvm(m) => m.dims(),
            TrainedClassifier::NeuralNet(m) => m.vocab_size(),
        };
        if dims != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                found: dims,
            });
        }
        Ok(SpamFilter {
            vocab,
            idf: file.idf,
            seq_len: file.seq_len,
            model: file.model,
            meta: file.meta,
            seed: file.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl PostScorer for SpamFilter {
    fn score_post(&self, post: &FolksonomyPost) -> Result<f64> {
        match &self.model {
            TrainedClassifier::NaiveBayes(nb) => nb.score(&self.sparse_features(post)?),
            TrainedClassifier::LinearSvm(svm) => svm.score(&self.sparse_features(post)?),
            TrainedClassifier::NeuralNet(net) => net.forward(&self.sequence(post)),
        }
    }

    /// Score many posts at once; batches the network forward pass.
    fn score_posts(&self, posts: &[FolksonomyPost]) -> Result<Vec<f64>> {
        match &self.model {
            TrainedClassifier::NeuralNet(net) => {
                let seqs: Vec<TokenSequence> = posts.iter().map(|p| self.sequence(p)).collect();
                let mut out = Vec::with_capacity(posts.len());
                for chunk in seqs.chunks(256) {
                    let refs: Vec<&TokenSequence> = chunk.iter().collect();
                    out.extend(net.forward_batch(&refs)?);
                }
                Ok(out)
            }
            _ => posts.iter().map(|p| self.score_post(p)).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    seed: u64,
    vocabulary: Vec<Tag>,
    idf: Option<IdfWeights>,
    seq_len: usize,
    model: TrainedClassifier,
    meta: TrainingMeta,
}

/// Split a corpus into posts scored `>= threshold` (kept as legitimate)
/// and the rest.
pub fn partition(corpus: &Corpus, scorer: &dyn PostScorer, threshold: f64) -> Result<(Corpus, Corpus)> {
    let scores = scorer.score_posts(corpus.posts())?;
    Ok(partition_by_scores(corpus, &scores, threshold))
}

pub fn partition_by_scores(corpus: &Corpus, scores: &[f64], threshold: f64) -> (Corpus, Corpus) {
    let (kept, dropped): (Vec<_>, Vec<_>) = corpus
        .posts()
        .iter()
        .zip(scores)
        .partition(|(_, &s)| s >= threshold);
    (
        Corpus::new(kept.into_iter().map(|(p, _)| p.clone()).collect()),
        Corpus::new(dropped.into_iter().map(|(p, _)| p.clone()).collect()),
    )
}

/// Posts predicted legitimate; ground-truth labels are kept.
pub fn filter_corpus(corpus: &Corpus, scorer: &dyn PostScorer, threshold: f64) -> Result<Corpus> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold must be in [0, 1], got {threshold}")));
    }
    Ok(partition(corpus, scorer, threshold)?.0)
}
