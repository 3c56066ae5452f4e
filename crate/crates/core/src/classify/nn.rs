//! Embedding → LSTM → dense(ReLU) → sigmoid classifier with hand-written
//! backpropagation through time and an ADAM optimizer.
//!
//! Parameters live in one flat `Vec<f64>`:
//!
//! | block        | shape            |
//! |--------------|------------------|
//! | embedding    | `(V + 1) × E`    |
//! | LSTM kernel  | `E × 4H`         |
//! | LSTM recurrent kernel | `H × 4H` |
//! | LSTM bias    | `4H`             |
//! | dense kernel | `H × D`          |
//! | dense bias   | `D`              |
//! | output kernel| `D`              |
//! | output bias  | `1`              |
//!
//! Gate columns are ordered input, forget, cell, output. Embedding row 0
//! belongs to the padding id; it is never read (padding always embeds to
//! zero) and never updated, so it does not count as a trainable parameter.
//!
//! With `mask_padding` the recurrence stops at the last non-padding
//! position of each sequence, so trailing padding leaves the state alone.
//! Batches are sorted by length so the rows still running at step `t`
//! always form a prefix, and every step is a pair of dense GEMMs.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{require_classes, sigmoid, softplus, Class, LabeledExample};
use crate::error::{Error, Result};
use crate::seeds;
use crate::vectorize::TokenSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArchitecture {
    pub embed_dim: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub seq_len: usize,
    #[serde(default = "default_mask")]
    pub mask_padding: bool,
}

fn default_mask() -> bool {
    true
}

impl NetArchitecture {
    /// Embedding 25, LSTM 250, dense layer as wide as the input sequence.
    pub fn for_sequence_length(seq_len: usize) -> Self {
        NetArchitecture {
            embed_dim: 25,
            lstm_units: 250,
            dense_units: seq_len,
            seq_len,
            mask_padding: true,
        }
    }

    /// Trainable parameters for a vocabulary of `vocab_size` tags.
    pub fn parameter_count(&self, vocab_size: usize) -> usize {
        let (e, h, d) = (self.embed_dim, self.lstm_units, self.dense_units);
        vocab_size * e + 4 * (e * h + h * h + h) + (h * d + d) + (d + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.lstm_units == 0 || self.dense_units == 0 || self.seq_len == 0 {
            return Err(Error::invalid(format!("all network dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Layout {
    embedding: Range<usize>,
    kernel: Range<usize>,
    recurrent: Range<usize>,
    lstm_bias: Range<usize>,
    dense: Range<usize>,
    dense_bias: Range<usize>,
    output: Range<usize>,
    output_bias: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &NetArchitecture, vocab_size: usize) -> Self {
        let (e, h, d) = (arch.embed_dim, arch.lstm_units, arch.dense_units);
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let embedding = take((vocab_size + 1) * e);
        let kernel = take(e * 4 * h);
        let recurrent = take(h * 4 * h);
        let lstm_bias = take(4 * h);
        let dense = take(h * d);
        let dense_bias = take(d);
        let output = take(d);
        let output_bias = take(1).start;
        Layout {
            embedding,
            kernel,
            recurrent,
            lstm_bias,
            dense,
            dense_bias,
            output,
            output_bias,
            total: at,
        }
    }

    /// The padding row of the embedding.
    fn frozen(&self, embed_dim: usize) -> Range<usize> {
        self.embedding.start..self.embedding.start + embed_dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeuralNetRepr", into = "NeuralNetRepr")]
pub struct NeuralNet {
    arch: NetArchitecture,
    vocab_size: usize,
    params: Vec<f64>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
struct NeuralNetRepr {
    arch: NetArchitecture,
    vocab_size: usize,
    params: Vec<f64>,
}

impl TryFrom<NeuralNetRepr> for NeuralNet {
    type Error = String;

    fn try_from(r: NeuralNetRepr) -> std::result::Result<Self, Self::Error> {
        NeuralNet::from_params(r.arch, r.vocab_size, r.params).map_err(|e| e.to_string())
    }
}

impl From<NeuralNet> for NeuralNetRepr {
    fn from(n: NeuralNet) -> Self {
        NeuralNetRepr {
            arch: n.arch,
            vocab_size: n.vocab_size,
            params: n.params,
        }
    }
}

/// Per-step activations kept for the backward pass. Row `r` of every
/// matrix is the `r`-th longest sequence in the batch.
struct StepTape {
    rows: usize,
    ids: Vec<u32>,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

struct Tape {
    order: Vec<usize>,
    steps: Vec<StepTape>,
    h_final: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_act: Vec<f64>,
}

/// C = A·B + beta·C for row-major operands, optionally transposed.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice length checks above bound every index the kernel
    // touches for these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn glorot(rng: &mut seeds::Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-bound..bound);
    }
}

impl NeuralNet {
    /// Glorot-uniform weights per matrix, forget-gate bias 1, other biases 0.
    pub fn init(arch: NetArchitecture, vocab_size: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if vocab_size == 0 {
            return Err(Error::invalid("vocabulary must not be empty"));
        }
        let layout = Layout::new(&arch, vocab_size);
        let mut params = vec![0.0; layout.total];
        let (e, h, d) = (arch.embed_dim, arch.lstm_units, arch.dense_units);
        let mut rng = seeds::rng(seed);
        glorot(&mut rng, &mut params[layout.embedding.start + e..layout.embedding.end], vocab_size, e);
        glorot(&mut rng, &mut params[layout.kernel.clone()], e, 4 * h);
        glorot(&mut rng, &mut params[layout.recurrent.clone()], h, 4 * h);
        glorot(&mut rng, &mut params[layout.dense.clone()], h, d);
        glorot(&mut rng, &mut params[layout.output.clone()], d, 1);
        let fb = layout.lstm_bias.start + h;
        params[fb..fb + h].iter_mut().for_each(|b| *b = 1.0);
        Ok(NeuralNet {
            arch,
            vocab_size,
            params,
            layout,
        })
    }

    pub fn from_params(arch: NetArchitecture, vocab_size: usize, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch, vocab_size);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch {
                expected: layout.total,
                found: params.len(),
            });
        }
        Ok(NeuralNet {
            arch,
            vocab_size,
            params,
            layout,
        })
    }

    pub fn architecture(&self) -> &NetArchitecture {
        &self.arch
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// All stored values, padding row included.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.layout.total - self.arch.embed_dim
    }

    /// Index range of the padding embedding row inside [`params`](Self::params).
    pub fn padding_row(&self) -> Range<usize> {
        self.layout.frozen(self.arch.embed_dim)
    }

    /// Largest absolute Glorot bound used by [`init`](Self::init).
    pub fn init_bound(&self) -> f64 {
        let (e, h, d) = (self.arch.embed_dim, self.arch.lstm_units, self.arch.dense_units);
        [(self.vocab_size, e), (e, 4 * h), (h, 4 * h), (h, d), (d, 1)]
            .iter()
            .map(|&(i, o)| (6.0 / (i + o) as f64).sqrt())
            .fold(0.0, f64::max)
    }

    fn check_sequence(&self, seq: &TokenSequence) -> Result<()> {
        if seq.len() != self.arch.seq_len {
            return Err(Error::DimensionMismatch {
                expected: self.arch.seq_len,
                found: seq.len(),
            });
        }
        if let Some(&id) = seq.ids.iter().find(|&&id| id as usize > self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }

    fn steps_of(&self, seq: &TokenSequence) -> usize {
        if self.arch.mask_padding {
            seq.content_len()
        } else {
            seq.len()
        }
    }

    /// Probability that the sequence is legitimate.
    pub fn forward(&self, seq: &TokenSequence) -> Result<f64> {
        Ok(self.forward_batch(&[seq])?[0])
    }

    pub fn forward_batch(&self, seqs: &[&TokenSequence]) -> Result<Vec<f64>> {
        Ok(self.logits(seqs)?.into_iter().map(sigmoid).collect())
    }

    pub fn logits(&self, seqs: &[&TokenSequence]) -> Result<Vec<f64>> {
        for s in seqs {
            self.check_sequence(s)?;
        }
        let (logits, _) = self.run_forward(seqs, false);
        Ok(logits)
    }

    /// Mean binary cross-entropy of a batch; targets are 1 for legitimate.
    pub fn loss(&self, batch: &[(&TokenSequence, Class)]) -> Result<f64> {
        let seqs: Vec<&TokenSequence> = batch.iter().map(|(s, _)| *s).collect();
        let logits = self.logits(&seqs)?;
        Ok(mean_bce(&logits, batch.iter().map(|(_, c)| c.target())))
    }

    /// Mean loss and its gradient with respect to every stored parameter.
    pub fn loss_and_gradient(&self, batch: &[(&TokenSequence, Class)]) -> Result<(f64, Vec<f64>)> {
        let seqs: Vec<&TokenSequence> = batch.iter().map(|(s, _)| *s).collect();
        for s in &seqs {
            self.check_sequence(s)?;
        }
        let (logits, tape) = self.run_forward(&seqs, true);
        let tape = tape.expect("tape requested");
        let targets: Vec<f64> = batch.iter().map(|(_, c)| c.target()).collect();
        let loss = mean_bce(&logits, targets.iter().copied());
        let grad = self.run_backward(&seqs, &logits, &targets, &tape);
        Ok((loss, grad))
    }

    fn run_forward(&self, seqs: &[&TokenSequence], record: bool) -> (Vec<f64>, Option<Tape>) {
        let b = seqs.len();
        let (e, h, d) = (self.arch.embed_dim, self.arch.lstm_units, self.arch.dense_units);
        let g4 = 4 * h;
        let p = &self.params;
        let lay = &self.layout;
        let emb = &p[lay.embedding.clone()];
        let kernel = &p[lay.kernel.clone()];
        let recurrent = &p[lay.recurrent.clone()];
        let bias = &p[lay.lstm_bias.clone()];

        let lengths: Vec<usize> = seqs.iter().map(|s| self.steps_of(s)).collect();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(lengths[i]));
        let t_max = order.first().map_or(0, |&i| lengths[i]);

        let mut hs = vec![0.0; b * h];
        let mut cs = vec![0.0; b * h];
        let mut steps = Vec::new();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for t in 0..t_max {
            let n = order.iter().take_while(|&&i| lengths[i] > t).count();
            let ids: Vec<u32> = order[..n].iter().map(|&i| seqs[i].ids[t]).collect();
            x.clear();
            x.resize(n * e, 0.0);
            for (r, &id) in ids.iter().enumerate() {
                if id != 0 {
                    let row = id as usize * e;
                    x[r * e..(r + 1) * e].copy_from_slice(&emb[row..row + e]);
                }
            }
            z.clear();
            for _ in 0..n {
                z.extend_from_slice(bias);
            }
            gemm(n, e, g4, &x, false, kernel, false, 1.0, &mut z);
            gemm(n, h, g4, &hs[..n * h], false, recurrent, false, 1.0, &mut z);

            let (h_prev, c_prev) = if record {
                (hs[..n * h].to_vec(), cs[..n * h].to_vec())
            } else {
                (Vec::new(), Vec::new())
            };
            let mut tanh_c = if record { vec![0.0; n * h] } else { Vec::new() };
            for r in 0..n {
                let zr = &mut z[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid(zr[j]);
                    let f_g = sigmoid(zr[h + j]);
                    let c_g = zr[2 * h + j].tanh();
                    let o_g = sigmoid(zr[3 * h + j]);
                    zr[j] = i_g;
                    zr[h + j] = f_g;
                    zr[2 * h + j] = c_g;
                    zr[3 * h + j] = o_g;
                    let c = f_g * cs[r * h + j] + i_g * c_g;
                    let tc = c.tanh();
                    cs[r * h + j] = c;
                    hs[r * h + j] = o_g * tc;
                    if record {
                        tanh_c[r * h + j] = tc;
                    }
                }
            }
            if record {
                steps.push(StepTape {
                    rows: n,
                    ids,
                    x: x.clone(),
                    h_prev,
                    c_prev,
                    gates: z.clone(),
                    tanh_c,
                });
            }
        }

        let mut pre = Vec::with_capacity(b * d);
        for _ in 0..b {
            pre.extend_from_slice(&p[lay.dense_bias.clone()]);
        }
        gemm(b, h, d, &hs, false, &p[lay.dense.clone()], false, 1.0, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let w_out = &p[lay.output.clone()];
        let b_out = p[lay.output_bias];
        let mut logits = vec![0.0; b];
        for r in 0..b {
            let a = &act[r * d..(r + 1) * d];
            logits[order[r]] = a.iter().zip(w_out).map(|(x, w)| x * w).sum::<f64>() + b_out;
        }
        let tape = record.then(|| Tape {
            order,
            steps,
            h_final: hs,
            dense_pre: pre,
            dense_act: act,
        });
        (logits, tape)
    }

    fn run_backward(&self, seqs: &[&TokenSequence], logits: &[f64], targets: &[f64], tape: &Tape) -> Vec<f64> {
        let b = seqs.len();
        let (e, h, d) = (self.arch.embed_dim, self.arch.lstm_units, self.arch.dense_units);
        let g4 = 4 * h;
        let p = &self.params;
        let lay = &self.layout;
        let mut grad = vec![0.0; lay.total];

        // Output unit: d(mean BCE)/d logit = (sigmoid(z) - y) / B.
        let dlogit: Vec<f64> = tape
            .order
            .iter()
            .map(|&i| (sigmoid(logits[i]) - targets[i]) / b as f64)
            .collect();
        let w_out = &p[lay.output.clone()];
        let mut dpre = vec![0.0; b * d];
        for r in 0..b {
            let a = &tape.dense_act[r * d..(r + 1) * d];
            let g = &mut grad[lay.output.clone()];
            for k in 0..d {
                g[k] += dlogit[r] * a[k];
                if tape.dense_pre[r * d + k] > 0.0 {
                    dpre[r * d + k] = dlogit[r] * w_out[k];
                }
            }
            grad[lay.output_bias] += dlogit[r];
        }
        {
            let gd = &mut grad[lay.dense_bias.clone()];
            for r in 0..b {
                for k in 0..d {
                    gd[k] += dpre[r * d + k];
                }
            }
        }
        gemm(h, b, d, &tape.h_final, true, &dpre, false, 1.0, &mut grad[lay.dense.clone()]);
        let mut dh = vec![0.0; b * h];
        gemm(b, d, h, &dpre, false, &p[lay.dense.clone()], true, 0.0, &mut dh);

        let mut dc = vec![0.0; b * h];
        let kernel = &p[lay.kernel.clone()];
        let recurrent = &p[lay.recurrent.clone()];
        let mut dz = Vec::new();
        let mut dx = Vec::new();
        let mut dh_prev = Vec::new();
        for step in tape.steps.iter().rev() {
            let n = step.rows;
            dz.clear();
            dz.resize(n * g4, 0.0);
            for r in 0..n {
                let gr = &step.gates[r * g4..(r + 1) * g4];
                let dzr = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let tc = step.tanh_c[r * h + j];
                    let dhv = dh[r * h + j];
                    let dcv = dc[r * h + j] + dhv * o_g * (1.0 - tc * tc);
                    dzr[j] = dcv * c_g * i_g * (1.0 - i_g);
                    dzr[h + j] = dcv * step.c_prev[r * h + j] * f_g * (1.0 - f_g);
                    dzr[2 * h + j] = dcv * i_g * (1.0 - c_g * c_g);
                    dzr[3 * h + j] = dhv * tc * o_g * (1.0 - o_g);
                    dc[r * h + j] = dcv * f_g;
                }
            }
            gemm(e, n, g4, &step.x, true, &dz, false, 1.0, &mut grad[lay.kernel.clone()]);
            gemm(h, n, g4, &step.h_prev, true, &dz, false, 1.0, &mut grad[lay.recurrent.clone()]);
            {
                let gb = &mut grad[lay.lstm_bias.clone()];
                for r in 0..n {
                    for (g, v) in gb.iter_mut().zip(&dz[r * g4..(r + 1) * g4]) {
                        *g += v;
                    }
                }
            }
            dh_prev.clear();
            dh_prev.resize(n * h, 0.0);
            gemm(n, g4, h, &dz, false, recurrent, true, 0.0, &mut dh_prev);
            dh[..n * h].copy_from_slice(&dh_prev);
            dx.clear();
            dx.resize(n * e, 0.0);
            gemm(n, g4, e, &dz, false, kernel, true, 0.0, &mut dx);
            let ge = &mut grad[lay.embedding.clone()];
            for (r, &id) in step.ids.iter().enumerate() {
                if id != 0 {
                    let row = id as usize * e;
                    for (g, v) in ge[row..row + e].iter_mut().zip(&dx[r * e..(r + 1) * e]) {
                        *g += v;
                    }
                }
            }
        }
        grad
    }

    /// Compare the analytic gradient of the single-example loss with
    /// central differences over every stored parameter.
    pub fn gradient_check(&self, seq: &TokenSequence, class: Class, step: f64) -> Result<GradientCheck> {
        let batch = [(seq, class)];
        let (loss, analytic) = self.loss_and_gradient(&batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut probe = self.clone();
        let mut worst = GradientCheck {
            max_relative_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            parameters_checked: self.params.len(),
            max_abs_error: 0.0,
        };
        let mut max_abs = 0.0f64;
        for i in 0..self.params.len() {
            let orig = probe.params[i];
            probe.params[i] = orig + step;
            let up = probe.loss(&batch)?;
            probe.params[i] = orig - step;
            let down = probe.loss(&batch)?;
            probe.params[i] = orig;
            if !(up.is_finite() && down.is_finite()) {
                return Err(Error::NonFinite(format!("perturbed loss at parameter {i}")));
            }
            let numeric = (up - down) / (2.0 * step);
            let ga = analytic[i];
            let err = relative_error(ga, numeric);
            max_abs = max_abs.max((ga - numeric).abs());
            if err > worst.max_relative_error {
                worst = GradientCheck {
                    max_relative_error: err,
                    worst_index: i,
                    analytic: ga,
                    numeric,
                    parameters_checked: self.params.len(),
                    max_abs_error: 0.0,
                };
            }
        }
        worst.max_abs_error = max_abs;
        Ok(worst)
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters_checked: usize,
    pub max_abs_error: f64,
}

fn mean_bce(logits: &[f64], targets: impl Iterator<Item = f64>) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(targets)
        .map(|(&z, y)| softplus(z) - y * z)
        .sum::<f64>()
        / n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(cfg: AdamConfig, n: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], frozen: Range<usize>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            if frozen.contains(&i) {
                continue;
            }
            let g = grad[i];
            let m = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            let v = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            params[i] -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
        }
    }
}

/// Epoch budget and early-stopping settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 50,
            patience: 3,
            val_fraction: 0.1,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NnTrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    /// 1-based epoch whose parameters were kept; 0 means the initial ones.
    pub best_epoch: usize,
    pub initial_train_loss: f64,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

/// Stratified train/validation split; each class keeps at least one
/// example on both sides.
fn stratified_split(examples: &[LabeledExample<TokenSequence>], fraction: f64, rng: &mut seeds::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [Class::Bogus, Class::Legitimate] {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].class == class).collect();
        idx.shuffle(rng);
        let n_val = if fraction > 0.0 {
            ((fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn dataset_loss(model: &NeuralNet, examples: &[LabeledExample<TokenSequence>], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(256) {
        let batch: Vec<(&TokenSequence, Class)> = chunk.iter().map(|&i| (&examples[i].features, examples[i].class)).collect();
        total += model.loss(&batch)? * chunk.len() as f64;
    }
    Ok(total / idx.len().max(1) as f64)
}

/// Mini-batch ADAM with early stopping on validation loss. Returns the
/// parameters of the best validation epoch (or the last epoch when no
/// validation split is requested).
pub fn train(
    mut model: NeuralNet,
    examples: &[LabeledExample<TokenSequence>],
    adam: &AdamConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(NeuralNet, NnTrainingMeta)> {
    require_classes(examples, 2)?;
    if schedule.batch_size == 0 {
        return Err(Error::invalid("batch size must be >= 1"));
    }
    if !(0.0..1.0).contains(&schedule.val_fraction) {
        return Err(Error::invalid("validation fraction must be in [0, 1)"));
    }
    for ex in examples {
        model.check_sequence(&ex.features)?;
    }
    let mut rng = seeds::rng(seed);
    let (mut train_idx, val_idx) = stratified_split(examples, schedule.val_fraction, &mut rng);
    let frozen = model.padding_row();
    let mut opt = Adam::new(*adam, model.params.len());
    let mut meta = NnTrainingMeta {
        seed,
        initial_train_loss: dataset_loss(&model, examples, &train_idx)?,
        ..Default::default()
    };
    let mut best_params = model.params.clone();
    let mut best_val = if val_idx.is_empty() {
        f64::INFINITY
    } else {
        dataset_loss(&model, examples, &val_idx)?
    };
    let mut stale = 0;

    for epoch in 1..=schedule.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(schedule.batch_size) {
            let batch: Vec<(&TokenSequence, Class)> =
                chunk.iter().map(|&i| (&examples[i].features, examples[i].class)).collect();
            let (loss, grad) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(&mut model.params, &grad, frozen.clone());
        }
        meta.train_losses.push(epoch_loss / train_idx.len() as f64);
        meta.epochs_run = epoch;
        if val_idx.is_empty() {
            best_params.clone_from(&model.params);
            meta.best_epoch = epoch;
            continue;
        }
        let val = dataset_loss(&model, examples, &val_idx)?;
        meta.val_losses.push(val);
        if val < best_val {
            best_val = val;
            best_params.clone_from(&model.params);
            meta.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NeuralNet {
        let arch = NetArchitecture {
            embed_dim: 3,
            lstm_units: 4,
            dense_units: 5,
            seq_len: 4,
            mask_padding: true,
        };
        NeuralNet::init(arch, 6, 17).unwrap()
    }

    fn seq(ids: &[u32]) -> TokenSequence {
        TokenSequence { ids: ids.to_vec() }
    }

    #[test]
    fn parameter_count_matches_layout() {
        let arch = NetArchitecture::for_sequence_length(50);
        let v = 120;
        let expected = v * 25 + 4 * (25 * 250 + 250 * 250 + 250) + (250 * 50 + 50) + (50 + 1);
        assert_eq!(arch.parameter_count(v), expected);
        let net = NeuralNet::init(arch, v, 0).unwrap();
        assert_eq!(net.trainable_parameter_count(), expected);
        assert_eq!(net.params().len(), expected + 25);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = tiny();
        assert_eq!(a.params(), tiny().params());
        let bound = a.init_bound();
        assert!(a.params().iter().all(|w| w.is_finite() && w.abs() <= bound.max(1.0)));
        assert!(a.params()[a.padding_row()].iter().all(|&w| w == 0.0));
        let other = NeuralNet::init(*a.architecture(), 6, 18).unwrap();
        assert_ne!(a.params(), other.params());
    }

    #[test]
    fn forward_validates_input() {
        let net = tiny();
        assert!(matches!(net.forward(&seq(&[1, 7, 0, 0])), Err(Error::TokenOutOfRange { id: 7, .. })));
        assert!(matches!(net.forward(&seq(&[1, 2])), Err(Error::DimensionMismatch { .. })));
        let p = net.forward(&seq(&[0, 0, 0, 0])).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn batch_matches_single() {
        let net = tiny();
        let seqs = [seq(&[1, 2, 3, 0]), seq(&[4, 0, 0, 0]), seq(&[0, 0, 0, 0]), seq(&[6, 5, 4, 3])];
        let refs: Vec<&TokenSequence> = seqs.iter().collect();
        let batch = net.forward_batch(&refs).unwrap();
        for (s, p) in seqs.iter().zip(batch) {
            assert!((net.forward(s).unwrap() - p).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = tiny();
        for (ids, class) in [(&[1u32, 3, 5, 0][..], Class::Legitimate), (&[2, 2, 6, 4][..], Class::Bogus)] {
            let check = net.gradient_check(&seq(ids), class, 1e-5).unwrap();
            assert!(check.max_relative_error < 1e-4, "{check:?}");
        }
    }

    #[test]
    fn unmasked_gradient_matches_too() {
        let mut arch = *tiny().architecture();
        arch.mask_padding = false;
        let net = NeuralNet::init(arch, 6, 5).unwrap();
        let check = net.gradient_check(&seq(&[4, 1, 0, 0]), Class::Bogus, 1e-5).unwrap();
        assert!(check.max_relative_error < 1e-4, "{check:?}");
    }
}
