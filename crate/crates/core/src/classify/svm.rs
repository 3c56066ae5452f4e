//! Primal linear SVM trained with Pegasos-style stochastic subgradient
//! steps on sparse inputs.
//!
//! The bias is handled as an extra constant feature, so it shares the L2
//! penalty with the weights. The iterate is stored as `scale * v` so the
//! shrink step is O(1) and each update touches only the nonzeros of one
//! example.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{require_classes, sigmoid, LabeledExample};
use crate::error::{Error, Result};
use crate::seeds;
use crate::vectorize::SparseVector;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    weights: Vec<f64>,
    bias: f64,
    lambda: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Full-data objective after each epoch.
    pub objectives: Vec<f64>,
}

impl LinearSvm {
    pub fn from_parts(weights: Vec<f64>, bias: f64, lambda: f64) -> Self {
        LinearSvm { weights, bias, lambda }
    }

    pub fn train(
        examples: &[LabeledExample<SparseVector>],
        params: &SvmParams,
        seed: u64,
    ) -> Result<(Self, SvmTrainingMeta)> {
        if !(params.lambda > 0.0 && params.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", params.lambda)));
        }
        require_classes(examples, 1)?;
        let dims = examples[0].features.dims();
        for ex in examples {
            if ex.features.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: ex.features.dims(),
                });
            }
            if !ex.features.is_finite() {
                return Err(Error::NonFinite("SVM feature value".into()));
            }
        }

        let lambda = params.lambda;
        let radius = 1.0 / lambda.sqrt();
        // v[dims] is the bias coordinate; each x is implicitly augmented with 1.
        let mut v = vec![0.0; dims + 1];
        let mut scale = 1.0f64;
        let mut v_norm_sq = 0.0f64;
        let mut t = 0u64;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = seeds::rng(seed);
        let mut meta = SvmTrainingMeta {
            seed,
            epochs: params.epochs,
            objectives: Vec::with_capacity(params.epochs),
        };

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &idx in &order {
                t += 1;
                let ex = &examples[idx];
                let y = ex.class.sign();
                let x = &ex.features;
                let vx = x.dot_dense(&v) + v[dims];
                let margin = y * scale * vx;
                let eta = 1.0 / (lambda * t as f64);
                let shrink = 1.0 - eta * lambda;
                if shrink <= 0.0 {
                    v.iter_mut().for_each(|w| *w = 0.0);
                    v_norm_sq = 0.0;
                    scale = 1.0;
                } else {
                    scale *= shrink;
                }
                if margin < 1.0 {
                    let a = eta * y / scale;
                    let x_norm_sq = x.norm_sq() + 1.0;
                    let vx_now = if shrink <= 0.0 { 0.0 } else { vx };
                    for &(i, xi) in x.entries() {
                        v[i] += a * xi;
                    }
                    v[dims] += a;
                    v_norm_sq += 2.0 * a * vx_now + a * a * x_norm_sq;
                }
                let w_norm = scale * v_norm_sq.max(0.0).sqrt();
                if w_norm > radius {
                    scale *= radius / w_norm;
                }
                if scale < 1e-9 {
                    v.iter_mut().for_each(|w| *w *= scale);
                    v_norm_sq = v.iter().map(|w| w * w).sum();
                    scale = 1.0;
                }
            }
            let model = LinearSvm {
                weights: v[..dims].iter().map(|w| w * scale).collect(),
                bias: v[dims] * scale,
                lambda,
            };
            meta.objectives.push(model.objective(examples));
        }

        Ok((
            LinearSvm {
                weights: v[..dims].iter().map(|w| w * scale).collect(),
                bias: v[dims] * scale,
                lambda,
            },
            meta,
        ))
    }

    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn margin(&self, x: &SparseVector) -> Result<f64> {
        if x.dims() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.dims(),
            });
        }
        Ok(x.dot_dense(&self.weights) + self.bias)
    }

    /// `sigmoid(w.x + b)`; 0.5 sits on the decision boundary.
    pub fn score(&self, x: &SparseVector) -> Result<f64> {
        Ok(sigmoid(self.margin(x)?))
    }

    /// `lambda/2 (|w|^2 + b^2) + mean hinge loss`.
    pub fn objective(&self, examples: &[LabeledExample<SparseVector>]) -> f64 {
        let reg = 0.5 * self.lambda * (self.weights.iter().map(|w| w * w).sum::<f64>() + self.bias * self.bias);
        let hinge: f64 = examples
            .iter()
            .map(|ex| {
                let m = ex.features.dot_dense(&self.weights) + self.bias;
                (1.0 - ex.class.sign() * m).max(0.0)
            })
            .sum();
        reg + hinge / examples.len().max(1) as f64
    }
}
