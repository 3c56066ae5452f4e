//! Spam filters over folksonomies: Bernoulli Naive Bayes on tag presence,
//! a linear SVM on TF-IDF vectors, and an Embedding→LSTM→dense network
//! trained with ADAM. All three score posts by the probability that they
//! are legitimate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod filter;
pub mod nb;
pub mod nn;
pub mod svm;

pub use filter::{
    filter_corpus, partition, partition_by_scores, ClassifierParams, NnParams, PostScorer, SpamFilter, TrainedClassifier,
    TrainingMeta,
};
pub use nb::NaiveBayes;
pub use nn::{AdamConfig, GradientCheck, NetArchitecture, NeuralNet, NnTrainingMeta, TrainSchedule};
pub use svm::{LinearSvm, SvmParams, SvmTrainingMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Bogus = 0,
    Legitimate = 1,
}

impl Class {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Regression target: 1 for legitimate, 0 for bogus.
    pub fn target(self) -> f64 {
        match self {
            Class::Bogus => 0.0,
            Class::Legitimate => 1.0,
        }
    }

    /// SVM sign convention.
    pub fn sign(self) -> f64 {
        match self {
            Class::Bogus => -1.0,
            Class::Legitimate => 1.0,
        }
    }

    pub fn from_score(score: f64, threshold: f64) -> Class {
        if score >= threshold {
            Class::Legitimate
        } else {
            Class::Bogus
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample<F> {
    pub features: F,
    pub class: Class,
}

impl<F> LabeledExample<F> {
    pub fn new(features: F, class: Class) -> Self {
        LabeledExample { features, class }
    }
}

/// Error unless both classes have at least `required` examples.
pub(crate) fn require_classes<F>(examples: &[LabeledExample<F>], required: usize) -> Result<()> {
    let legitimate = examples.iter().filter(|e| e.class == Class::Legitimate).count();
    let bogus = examples.len() - legitimate;
    if legitimate < required || bogus < required {
        return Err(Error::ClassImbalance {
            legitimate,
            bogus,
            required,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "nb")]
    NaiveBayes,
    #[serde(rename = "svm")]
    LinearSvm,
    #[serde(rename = "nn")]
    NeuralNet,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::NaiveBayes, ClassifierKind::LinearSvm, ClassifierKind::NeuralNet];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::NaiveBayes => "nb",
            ClassifierKind::LinearSvm => "svm",
            ClassifierKind::NeuralNet => "nn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" | "bayes" | "naive-bayes" => Ok(ClassifierKind::NaiveBayes),
            "svm" | "linear-svm" => Ok(ClassifierKind::LinearSvm),
            "nn" | "dl" | "lstm" | "neural" => Ok(ClassifierKind::NeuralNet),
            other => Err(Error::invalid(format!("unknown classifier `{other}`"))),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
