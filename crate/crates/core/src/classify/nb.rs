//! Bernoulli Naive Bayes over tag presence.

use serde::{Deserialize, Serialize};

use super::{require_classes, Class, LabeledExample};
use crate::error::{Error, Result};
use crate::vectorize::SparseVector;

/// Per-class log priors and per-term log presence/absence probabilities,
/// indexed by [`Class::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    dims: usize,
    alpha: f64,
    log_prior: [f64; 2],
    log_present: [Vec<f64>; 2],
    log_absent: [Vec<f64>; 2],
    /// Sum of `log_absent` per class: the log likelihood of an empty post.
    absent_total: [f64; 2],
}

impl NaiveBayes {
    /// `P(t|c) = (n_tc + alpha) / (N_c + 2 alpha)`, priors `N_c / N`.
    pub fn train(examples: &[LabeledExample<SparseVector>], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        require_classes(examples, 1)?;
        let dims = examples[0].features.dims();
        let mut doc_count = [0usize; 2];
        let mut term_count = [vec![0usize; dims], vec![0usize; dims]];
        for ex in examples {
            if ex.features.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: ex.features.dims(),
                });
            }
            let c = ex.class.index();
            doc_count[c] += 1;
            for &(i, _) in ex.features.entries() {
                term_count[c][i] += 1;
            }
        }
        let n = examples.len() as f64;
        let mut log_present = [Vec::with_capacity(dims), Vec::with_capacity(dims)];
        let mut log_absent = [Vec::with_capacity(dims), Vec::with_capacity(dims)];
        let mut absent_total = [0.0; 2];
        for c in 0..2 {
            let denom = doc_count[c] as f64 + 2.0 * alpha;
            for &k in &term_count[c] {
                let p = (k as f64 + alpha) / denom;
                log_present[c].push(p.ln());
                let q = (-p).ln_1p();
                log_absent[c].push(q);
                absent_total[c] += q;
            }
        }
        Ok(NaiveBayes {
            dims,
            alpha,
            log_prior: [(doc_count[0] as f64 / n).ln(), (doc_count[1] as f64 / n).ln()],
            log_present,
            log_absent,
            absent_total,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `P(tag i present | class)`.
    pub fn presence_probability(&self, class: Class, i: usize) -> f64 {
        self.log_present[class.index()][i].exp()
    }

    pub fn log_prior(&self, class: Class) -> f64 {
        self.log_prior[class.index()]
    }

    /// Log joint `ln P(c) + ln P(x|c)` for both classes. Every vocabulary
    /// term contributes, present or absent.
    pub fn log_joint(&self, x: &SparseVector) -> Result<[f64; 2]> {
        if x.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                found: x.dims(),
            });
        }
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.log_prior[c] + self.absent_total[c];
            for &(i, _) in x.entries() {
                s += self.log_present[c][i] - self.log_absent[c][i];
            }
            *o = s;
        }
        Ok(out)
    }

    /// Class posteriors, indexed by [`Class::index`].
    pub fn posterior(&self, x: &SparseVector) -> Result<[f64; 2]> {
        let [lb, ll] = self.log_joint(x)?;
        let m = lb.max(ll);
        let (eb, el) = ((lb - m).exp(), (ll - m).exp());
        let z = eb + el;
        Ok([eb / z, el / z])
    }

    /// Probability that `x` is legitimate.
    pub fn score(&self, x: &SparseVector) -> Result<f64> {
        Ok(self.posterior(x)?[Class::Legitimate.index()])
    }
}
