//! Linear membership probes.
//!
//! A probe is an affine map followed by a softmax over the two membership
//! classes, trained on per-feature standardized inputs by plain gradient
//! descent on L2-regularized cross-entropy. The held-out cross-entropy of the
//! selected probe gives a decodable-information estimate
//! `I(Y;Z) ≈ H(Y) - H_f(Y|Z)`.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::Split;
use crate::infotheory::{self, label_entropy, nats_to_bits, InfoError};

/// Membership has two classes; index 1 is "forget".
pub const NUM_CLASSES: usize = 2;
pub const FORGET_CLASS: usize = 1;

const INIT_STD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("training labels contain a single class")]
    SingleClass,

    #[error("loss became non-finite at epoch {epoch} (learning rate {learning_rate})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Info(#[from] InfoError),
}

pub type Result<T> = std::result::Result<T, ProbeError>;

/// Gradient-descent settings shared by probes and redundancy decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeFitConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub l2: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeFitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            batch_size: None,
            l2: 1e-4,
            patience: 50,
            seed: 0,
        }
    }
}

impl ProbeFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ProbeError::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ProbeError::Config("epochs must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(ProbeError::Config("batch size must be positive".into()));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(ProbeError::Config(format!("L2 strength {} must be >= 0", self.l2)));
        }
        Ok(())
    }
}

/// Per-feature affine normalization captured from training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Constant features get unit scale, so they standardize to zero.
    pub fn fit(x: ArrayView2<'_, f32>, rows: &[usize]) -> Self {
        let d = x.ncols();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, &v) in mean.iter_mut().zip(x.row(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, &v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                let dv = v as f64 - m;
                *s += dv * dv;
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn apply_into(&self, x: impl IntoIterator<Item = f64>, out: &mut Vec<f64>) {
        for ((v, m), s) in x.into_iter().zip(&self.mean).zip(&self.scale) {
            out.push((v - m) / s);
        }
    }
}

/// Standardized rows gathered once for repeated passes.
pub(crate) struct Design {
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub d: usize,
}

impl Design {
    pub fn new(x: ArrayView2<'_, f32>, labels: &[u8], rows: &[usize], st: &Standardizer) -> Self {
        let d = x.ncols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            st.apply_into(x.row(i).iter().map(|&v| v as f64), &mut data);
        }
        Self {
            x: data,
            y: rows.iter().map(|&i| labels[i]).collect(),
            d,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Affine parameters, weights stored `d × classes` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Affine {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(d: usize) -> Self {
        Self {
            w: vec![0.0; d * NUM_CLASSES],
            b: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        Self {
            w: (0..d * NUM_CLASSES).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn logits(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let mut z = [self.b[0], self.b[1]];
        for (j, &xj) in x.iter().enumerate() {
            let row = &self.w[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
            z[0] += xj * row[0];
            z[1] += xj * row[1];
        }
        z
    }

    /// Softmax probabilities and log-probabilities (nats).
    pub fn probs(&self, x: &[f64]) -> ([f64; NUM_CLASSES], [f64; NUM_CLASSES]) {
        let z = self.logits(x);
        let m = z[0].max(z[1]);
        let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
        let logp = [z[0] - lse, z[1] - lse];
        ([logp[0].exp(), logp[1].exp()], logp)
    }

    pub fn sq_norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    /// `grad += dlogits ⊗ x`.
    pub fn accumulate(&self, grad: &mut Affine, x: &[f64], dlogits: &[f64; NUM_CLASSES]) {
        for (j, &xj) in x.iter().enumerate() {
            let g = &mut grad.w[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
            g[0] += xj * dlogits[0];
            g[1] += xj * dlogits[1];
        }
        grad.b[0] += dlogits[0];
        grad.b[1] += dlogits[1];
    }

    pub fn step(&mut self, grad: &Affine, lr: f64) {
        for (w, g) in self.w.iter_mut().zip(&grad.w) {
            *w -= lr * g;
        }
        for (b, g) in self.b.iter_mut().zip(&grad.b) {
            *b -= lr * g;
        }
    }

    pub fn reset(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.b.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Mean cross-entropy of `params` on `design`, in nats.
pub(crate) fn mean_cross_entropy(params: &Affine, design: &Design) -> f64 {
    if design.len() == 0 {
        return 0.0;
    }
    let total: f64 = (0..design.len())
        .map(|i| -params.probs(design.row(i)).1[design.y[i] as usize])
        .sum();
    total / design.len() as f64
}

/// Per-epoch mini-batch schedule: fixed order for full batch, seeded shuffles otherwise.
pub(crate) struct Batches {
    order: Vec<usize>,
    size: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    pub fn new(n: usize, batch_size: Option<usize>, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            size: batch_size.unwrap_or(n).clamp(1, n.max(1)),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn epoch(&mut self) -> std::slice::Chunks<'_, usize> {
        if self.size < self.order.len() {
            self.order.shuffle(&mut self.rng);
        }
        self.order.chunks(self.size)
    }
}

/// A fitted probe: standardization followed by an affine softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub(crate) standardizer: Standardizer,
    pub(crate) params: Affine,
}

impl ProbeModel {
    /// A model whose prediction is independent of its input.
    pub fn constant(dim: usize, bias: [f64; NUM_CLASSES]) -> Self {
        let mut params = Affine::zeros(dim);
        params.b = bias.to_vec();
        Self {
            standardizer: Standardizer {
                mean: vec![0.0; dim],
                scale: vec![1.0; dim],
            },
            params,
        }
    }

    pub(crate) fn from_parts(standardizer: Standardizer, params: Affine) -> Self {
        Self {
            standardizer,
            params,
        }
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.params.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.params.b
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Class probabilities for one raw (unstandardized) input.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_iter(x.iter().copied(), x.len())
    }

    pub fn predict_row(&self, x: ArrayView1<'_, f32>) -> Result<Vec<f64>> {
        self.predict_iter(x.iter().map(|&v| v as f64), x.len())
    }

    /// Probability of the forget class.
    pub fn forget_probability(&self, x: ArrayView1<'_, f32>) -> Result<f64> {
        Ok(self.predict_row(x)?[FORGET_CLASS])
    }

    fn predict_iter(&self, x: impl Iterator<Item = f64>, len: usize) -> Result<Vec<f64>> {
        if len != self.dim() {
            return Err(ProbeError::Shape(format!(
                "input has {len} features, probe expects {}",
                self.dim()
            )));
        }
        let mut z = Vec::with_capacity(len);
        self.standardizer.apply_into(x, &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Shape("input is not finite".into()));
        }
        Ok(self.params.probs(&z).0.to_vec())
    }
}

fn check_rows(x: ArrayView2<'_, f32>, labels: &[u8], rows: &[usize]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(ProbeError::Shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if let Some(&i) = rows.iter().find(|&&i| i >= labels.len()) {
        return Err(ProbeError::Shape(format!("row index {i} out of range")));
    }
    Ok(())
}

fn has_both_classes(labels: &[u8], rows: &[usize]) -> bool {
    let ones = rows.iter().filter(|&&i| labels[i] != 0).count();
    ones > 0 && ones < rows.len()
}

/// Fits a probe on `train` rows, keeping the parameters with the lowest
/// validation cross-entropy (training loss when `validation` is empty).
pub fn fit_probe(
    x: ArrayView2<'_, f32>,
    labels: &[u8],
    train: &[usize],
    validation: &[usize],
    cfg: &ProbeFitConfig,
) -> Result<ProbeModel> {
    cfg.validate()?;
    check_rows(x, labels, train)?;
    check_rows(x, labels, validation)?;
    if train.len() < 2 || !has_both_classes(labels, train) {
        return Err(ProbeError::SingleClass);
    }
    let st = Standardizer::fit(x, train);
    let train_d = Design::new(x, labels, train, &st);
    let val_d = Design::new(x, labels, validation, &st);
    let select_on = if val_d.len() > 0 { &val_d } else { &train_d };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Affine::random(x.ncols(), &mut rng);
    let mut grad = Affine::zeros(x.ncols());
    let mut batches = Batches::new(train_d.len(), cfg.batch_size, cfg.seed);

    let mut best = params.clone();
    let mut best_loss = mean_cross_entropy(&params, select_on);
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        for batch in batches.epoch() {
            grad.reset();
            let mut loss = 0.0;
            for &i in batch {
                let row = train_d.row(i);
                let (p, logp) = params.probs(row);
                let y = train_d.y[i] as usize;
                loss -= logp[y];
                let mut dz = p;
                dz[y] -= 1.0;
                params.accumulate(&mut grad, row, &dz);
            }
            let m = batch.len() as f64;
            loss = loss / m + 0.5 * cfg.l2 * params.sq_norm();
            if !loss.is_finite() {
                return Err(ProbeError::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            for (g, w) in grad.w.iter_mut().zip(&params.w) {
                *g = *g / m + cfg.l2 * w;
            }
            grad.b.iter_mut().for_each(|g| *g /= m);
            params.step(&grad, cfg.learning_rate);
        }
        let val = mean_cross_entropy(&params, select_on);
        if !val.is_finite() {
            return Err(ProbeError::Divergence {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        if val < best_loss {
            best_loss = val;
            best.clone_from(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(ProbeModel::from_parts(st, best))
}

/// Ties an estimate to the labels and split it was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the label vector and the split's index lists.
    pub family: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(labels: &[u8], split: &Split, seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(labels);
        h.update(split.digest().as_bytes());
        Self {
            family: hex::encode(h.finalize()),
            seed,
        }
    }
}

/// Held-out decodable information about membership in one representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Empirical label entropy on the test split.
    pub h_y_bits: f64,
    /// Mean test cross-entropy of the selected probe.
    pub cross_entropy_bits: f64,
    pub mi_bits_raw: f64,
    /// `mi_bits_raw` clamped into `[0, h_y_bits]`.
    pub mi_bits: f64,
    pub auroc: f64,
    /// Fraction of test samples misclassified by the probe's argmax.
    pub test_error: f64,
    pub n_test: usize,
    pub provenance: Provenance,
}

/// Test-split metrics of a fitted probe.
pub fn evaluate(
    model: &ProbeModel,
    x: ArrayView2<'_, f32>,
    labels: &[u8],
    test: &[usize],
) -> Result<(f64, f64, f64, f64)> {
    check_rows(x, labels, test)?;
    if x.ncols() != model.dim() {
        return Err(ProbeError::Shape(format!(
            "matrix has {} columns, probe expects {}",
            x.ncols(),
            model.dim()
        )));
    }
    if !has_both_classes(labels, test) {
        return Err(ProbeError::SingleClass);
    }
    let design = Design::new(x, labels, test, &model.standardizer);
    let mut scores = Vec::with_capacity(test.len());
    let mut ce = 0.0;
    let mut wrong = 0usize;
    for i in 0..design.len() {
        let (p, logp) = model.params.probs(design.row(i));
        let y = design.y[i] as usize;
        ce -= logp[y];
        let predicted = usize::from(p[FORGET_CLASS] > p[1 - FORGET_CLASS]);
        wrong += usize::from(predicted != y);
        scores.push(p[FORGET_CLASS]);
    }
    let n = design.len() as f64;
    let h_y = label_entropy(design.y.iter().copied());
    let auroc = infotheory::auroc(&scores, &design.y)?;
    Ok((h_y, nats_to_bits(ce / n), auroc, wrong as f64 / n))
}

/// Fits a probe on the split's train part, selects on validation and reports
/// test-split information, AUROC and error.
pub fn estimate_mi(
    x: ArrayView2<'_, f32>,
    labels: &[u8],
    cfg: &ProbeFitConfig,
    split: &Split,
) -> Result<MiEstimate> {
    Ok(estimate_mi_with_model(x, labels, cfg, split)?.1)
}

pub fn estimate_mi_with_model(
    x: ArrayView2<'_, f32>,
    labels: &[u8],
    cfg: &ProbeFitConfig,
    split: &Split,
) -> Result<(ProbeModel, MiEstimate)> {
    for part in split.parts() {
        check_rows(x, labels, part)?;
        if !has_both_classes(labels, part) {
            return Err(ProbeError::SingleClass);
        }
    }
    let model = fit_probe(x, labels, &split.train, &split.validation, cfg)?;
    let (h_y, ce, auroc, test_error) = evaluate(&model, x, labels, &split.test)?;
    let raw = h_y - ce;
    let estimate = MiEstimate {
        h_y_bits: h_y,
        cross_entropy_bits: ce,
        mi_bits_raw: raw,
        mi_bits: raw.clamp(0.0, h_y),
        auroc,
        test_error,
        n_test: split.test.len(),
        provenance: Provenance::new(labels, split, cfg.seed),
    };
    Ok((model, estimate))
}

/// Information decodable from the concatenation `[B | U]`.
pub fn estimate_joint_mi(
    base: ArrayView2<'_, f32>,
    unlearned: ArrayView2<'_, f32>,
    labels: &[u8],
    cfg: &ProbeFitConfig,
    split: &Split,
) -> Result<MiEstimate> {
    if base.nrows() != unlearned.nrows() {
        return Err(ProbeError::Shape(format!(
            "base has {} rows, unlearned has {}",
            base.nrows(),
            unlearned.nrows()
        )));
    }
    let joint = ndarray::concatenate(ndarray::Axis(1), &[base, unlearned])
        .map_err(|e| ProbeError::Shape(e.to_string()))?;
    estimate_mi(joint.view(), labels, cfg, split)
}
