//! Redundant-information neural estimation with linear decoders.
//!
//! Two decoders `f1(y|b)` and `f2(y|u)` minimize
//! `½ H_f1(Y|B) + ½ H_f2(Y|U) + β D(f1, f2)` jointly, where
//! `D = E ‖f1(·|b) - f2(·|u)‖₁` is the mean L1 distance between their
//! predictive distributions. β ramps over a schedule with warm starts; the
//! first stage whose held-out `D` falls within tolerance is accepted. The
//! redundancy estimate is `I_cap = H(Y) - L_cap` with `L_cap` the mean
//! held-out cross-entropy of the two accepted decoders.
//!
//! Cross-entropies inside the objective are in bits. Each stage uses the step
//! size `learning_rate / (1 + β)` so the penalty's subgradient cannot blow up
//! the update as β grows.

use ndarray::{ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{RepresentationDataset, Split};
use crate::infotheory::label_entropy;
use crate::probe::{
    estimate_mi, fit_probe, Affine, Batches, Design, ProbeError, ProbeFitConfig, ProbeModel,
    Provenance, Standardizer, NUM_CLASSES,
};

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum RineError {
    #[error("objective became non-finite in stage {stage} (beta {beta})")]
    Divergence { stage: usize, beta: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("split part {0} lacks one of the two classes")]
    SingleClass(&'static str),

    #[error("shape error: {0}")]
    Shape(String),

    #[error(transparent)]
    Probe(#[from] ProbeError),
}

pub type Result<T> = std::result::Result<T, RineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RineConfig {
    pub decoder: ProbeFitConfig,
    /// Nondecreasing penalty weights, one training stage each.
    pub betas: Vec<f64>,
    /// Held-out `D` at or below which a stage is accepted; within `[0, 2]`.
    pub agreement_tolerance: f64,
    pub seed: u64,
}

impl Default for RineConfig {
    fn default() -> Self {
        Self {
            decoder: ProbeFitConfig::default(),
            betas: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            agreement_tolerance: 0.05,
            seed: 0,
        }
    }
}

impl RineConfig {
    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        if self.betas.is_empty() {
            return Err(RineError::Config("beta schedule is empty".into()));
        }
        if self.betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(RineError::Config(format!(
                "betas {:?} must be finite and nonnegative",
                self.betas
            )));
        }
        if self.betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(RineError::Config(format!(
                "beta schedule {:?} must be nondecreasing",
                self.betas
            )));
        }
        if !(0.0..=2.0).contains(&self.agreement_tolerance) {
            return Err(RineError::Config(format!(
                "agreement tolerance {} outside [0, 2]",
                self.agreement_tolerance
            )));
        }
        Ok(())
    }
}

/// Membership decoders on the base (`f1`) and unlearned (`f2`) representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderPair {
    pub base: ProbeModel,
    pub unlearned: ProbeModel,
}

impl DecoderPair {
    /// Two probes trained separately, without any agreement pressure.
    pub fn fit_independent(
        ds: &RepresentationDataset,
        cfg: &ProbeFitConfig,
        split: &Split,
    ) -> Result<Self> {
        let base = fit_probe(ds.base(), ds.labels(), &split.train, &split.validation, cfg)?;
        let unlearned =
            fit_probe(ds.unlearned(), ds.labels(), &split.train, &split.validation, cfg)?;
        Ok(Self { base, unlearned })
    }

    /// `(p1, p2)`: forget-class probabilities from each decoder.
    pub fn forget_probs(
        &self,
        b: ArrayView1<'_, f32>,
        u: ArrayView1<'_, f32>,
    ) -> Result<(f64, f64)> {
        Ok((
            self.base.forget_probability(b)?,
            self.unlearned.forget_probability(u)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub beta: f64,
    /// Validation `½H_f1 + ½H_f2` in bits.
    pub loss_bits: f64,
    /// Validation agreement gap.
    pub agreement_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyEstimate {
    pub h_y_bits: f64,
    pub l_cap_bits: f64,
    pub i_cap_bits_raw: f64,
    /// `i_cap_bits_raw` clamped into `[0, ceiling_bits]`.
    pub i_cap_bits: f64,
    /// `min(Î(Y;B), Î(Y;U))` used as the upper clamp.
    pub ceiling_bits: f64,
    /// Test-split agreement gap of the accepted decoders.
    pub d_final: f64,
    pub accepted_stage: usize,
    pub accepted_beta: f64,
    /// False when no stage reached the tolerance and the final stage was used.
    pub constraint_met: bool,
    pub trace: Vec<StageTrace>,
    pub decoders: DecoderPair,
    pub provenance: Provenance,
}

/// Mean L1 distance between the decoders' predictive distributions over `rows`.
pub fn agreement_gap(
    f1: &ProbeModel,
    f2: &ProbeModel,
    base: ArrayView2<'_, f32>,
    unlearned: ArrayView2<'_, f32>,
    rows: &[usize],
) -> Result<f64> {
    if base.ncols() != f1.dim() || unlearned.ncols() != f2.dim() {
        return Err(RineError::Shape(format!(
            "decoders expect {}+{} features, got {}+{}",
            f1.dim(),
            f2.dim(),
            base.ncols(),
            unlearned.ncols()
        )));
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &i in rows {
        if i >= base.nrows() || i >= unlearned.nrows() {
            return Err(RineError::Shape(format!("row {i} out of range")));
        }
        let p1 = f1.predict_row(base.row(i))?;
        let p2 = f2.predict_row(unlearned.row(i))?;
        total += p1.iter().zip(&p2).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / rows.len() as f64)
}

/// Forget-class probabilities from the accepted decoders.
pub fn decoder_forget_probs(
    est: &RedundancyEstimate,
    b: ArrayView1<'_, f32>,
    u: ArrayView1<'_, f32>,
) -> Result<(f64, f64)> {
    est.decoders.forget_probs(b, u)
}

/// Both sides standardized on the same rows.
struct PairedDesign {
    base: Design,
    unlearned: Design,
}

impl PairedDesign {
    fn len(&self) -> usize {
        self.base.len()
    }
}

#[derive(Default)]
struct PairMetrics {
    ce1: f64,
    ce2: f64,
    gap: f64,
}

impl PairMetrics {
    fn loss_bits(&self) -> f64 {
        0.5 * (self.ce1 + self.ce2)
    }

    fn lagrangian(&self, beta: f64) -> f64 {
        self.loss_bits() + beta * self.gap
    }
}

/// Mean cross-entropies (bits) and agreement gap over a paired design.
fn pair_metrics(f1: &Affine, f2: &Affine, d: &PairedDesign) -> PairMetrics {
    let n = d.len();
    if n == 0 {
        return PairMetrics::default();
    }
    let mut m = PairMetrics::default();
    for i in 0..n {
        let y = d.base.y[i] as usize;
        let (p1, l1) = f1.probs(d.base.row(i));
        let (p2, l2) = f2.probs(d.unlearned.row(i));
        m.ce1 -= l1[y];
        m.ce2 -= l2[y];
        m.gap += (0..NUM_CLASSES).map(|k| (p1[k] - p2[k]).abs()).sum::<f64>();
    }
    let n = n as f64;
    m.ce1 /= n * LN_2;
    m.ce2 /= n * LN_2;
    m.gap /= n;
    m
}

/// Gradient of `p ↦ Σ_k s_k p_k` with respect to softmax logits.
fn l1_logit_grad(p: &[f64; NUM_CLASSES], s: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let dot = p[0] * s[0] + p[1] * s[1];
    [p[0] * (s[0] - dot), p[1] * (s[1] - dot)]
}

/// Trains the decoder pair and returns the redundancy estimate. The upper
/// clamp is computed from single-source probes fitted with `cfg.decoder`.
pub fn fit_rine(ds: &RepresentationDataset, cfg: &RineConfig, split: &Split) -> Result<RedundancyEstimate> {
    cfg.validate()?;
    let mi_b = estimate_mi(ds.base(), ds.labels(), &cfg.decoder, split)?;
    let mi_u = estimate_mi(ds.unlearned(), ds.labels(), &cfg.decoder, split)?;
    fit_rine_with_ceiling(ds, cfg, split, mi_b.mi_bits.min(mi_u.mi_bits))
}

/// As [`fit_rine`], with the single-source information ceiling supplied by
/// the caller.
pub fn fit_rine_with_ceiling(
    ds: &RepresentationDataset,
    cfg: &RineConfig,
    split: &Split,
    ceiling_bits: f64,
) -> Result<RedundancyEstimate> {
    cfg.validate()?;
    let labels = ds.labels();
    for (name, part) in ["train", "validation", "test"].into_iter().zip(split.parts()) {
        if part.iter().any(|&i| i >= ds.n()) {
            return Err(RineError::Shape(format!("{name} split indexes past {} rows", ds.n())));
        }
        let ones = part.iter().filter(|&&i| labels[i] != 0).count();
        if ones == 0 || ones == part.len() {
            return Err(RineError::SingleClass(name));
        }
    }

    let st_b = Standardizer::fit(ds.base(), &split.train);
    let st_u = Standardizer::fit(ds.unlearned(), &split.train);
    let paired = |rows: &[usize]| PairedDesign {
        base: Design::new(ds.base(), labels, rows, &st_b),
        unlearned: Design::new(ds.unlearned(), labels, rows, &st_u),
    };
    let train = paired(&split.train);
    let val = paired(&split.validation);
    let test = paired(&split.test);

    let dec = &cfg.decoder;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut f1 = Affine::random(ds.d_base(), &mut rng);
    let mut f2 = Affine::random(ds.d_unlearned(), &mut rng);
    let mut g1 = Affine::zeros(ds.d_base());
    let mut g2 = Affine::zeros(ds.d_unlearned());
    let mut batches = Batches::new(train.len(), dec.batch_size, cfg.seed);

    let mut trace = Vec::with_capacity(cfg.betas.len());
    let mut accepted = None;

    for (stage, &beta) in cfg.betas.iter().enumerate() {
        let step = dec.learning_rate / (1.0 + beta);
        let diverged = || RineError::Divergence { stage, beta };
        let mut best = (f1.clone(), f2.clone());
        let mut best_obj = pair_metrics(&f1, &f2, &val).lagrangian(beta);
        let mut since_best = 0usize;

        for _epoch in 0..dec.epochs {
            for batch in batches.epoch() {
                g1.reset();
                g2.reset();
                let mut obj = 0.0;
                for &i in batch {
                    let y = train.base.y[i] as usize;
                    let (x1, x2) = (train.base.row(i), train.unlearned.row(i));
                    let (p1, l1) = f1.probs(x1);
                    let (p2, l2) = f2.probs(x2);
                    let mut sign = [0.0; NUM_CLASSES];
                    let mut gap = 0.0;
                    for k in 0..NUM_CLASSES {
                        let diff = p1[k] - p2[k];
                        gap += diff.abs();
                        sign[k] = if diff > 0.0 {
                            1.0
                        } else if diff < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    obj += -0.5 * (l1[y] + l2[y]) / LN_2 + beta * gap;

                    let neg_sign = [-sign[0], -sign[1]];
                    let a1 = l1_logit_grad(&p1, &sign);
                    let a2 = l1_logit_grad(&p2, &neg_sign);
                    let mut dz1 = [0.0; NUM_CLASSES];
                    let mut dz2 = [0.0; NUM_CLASSES];
                    for k in 0..NUM_CLASSES {
                        let target = if k == y { 1.0 } else { 0.0 };
                        dz1[k] = 0.5 * (p1[k] - target) / LN_2 + beta * a1[k];
                        dz2[k] = 0.5 * (p2[k] - target) / LN_2 + beta * a2[k];
                    }
                    f1.accumulate(&mut g1, x1, &dz1);
                    f2.accumulate(&mut g2, x2, &dz2);
                }
                let m = batch.len() as f64;
                obj = obj / m + 0.5 * dec.l2 * (f1.sq_norm() + f2.sq_norm());
                if !obj.is_finite() {
                    return Err(diverged());
                }
                for (g, f) in [(&mut g1, &f1), (&mut g2, &f2)] {
                    for (gw, w) in g.w.iter_mut().zip(&f.w) {
                        *gw = *gw / m + dec.l2 * w;
                    }
                    g.b.iter_mut().for_each(|gb| *gb /= m);
                }
                f1.step(&g1, step);
                f2.step(&g2, step);
            }

            let current = pair_metrics(&f1, &f2, &val).lagrangian(beta);
            if !current.is_finite() {
                return Err(diverged());
            }
            if current < best_obj {
                best_obj = current;
                best = (f1.clone(), f2.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if dec.patience > 0 && since_best >= dec.patience {
                    break;
                }
            }
        }

        // Warm start the next stage from this stage's selection.
        (f1, f2) = best;
        let held_out = pair_metrics(&f1, &f2, &val);
        trace.push(StageTrace {
            beta,
            loss_bits: held_out.loss_bits(),
            agreement_gap: held_out.gap,
        });
        if held_out.gap <= cfg.agreement_tolerance {
            accepted = Some(stage);
            break;
        }
    }

    let constraint_met = accepted.is_some();
    let accepted_stage = accepted.unwrap_or(cfg.betas.len() - 1);
    let on_test = pair_metrics(&f1, &f2, &test);
    let h_y = label_entropy(test.base.y.iter().copied());
    let l_cap = on_test.loss_bits();
    let raw = h_y - l_cap;
    let ceiling = ceiling_bits.max(0.0);

    Ok(RedundancyEstimate {
        h_y_bits: h_y,
        l_cap_bits: l_cap,
        i_cap_bits_raw: raw,
        i_cap_bits: raw.clamp(0.0, ceiling),
        ceiling_bits: ceiling,
        d_final: on_test.gap,
        accepted_stage,
        accepted_beta: cfg.betas[accepted_stage],
        constraint_met,
        trace,
        decoders: DecoderPair {
            base: ProbeModel::from_parts(st_b, f1),
            unlearned: ProbeModel::from_parts(st_u, f2),
        },
        provenance: Provenance::new(labels, split, cfg.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, SplitSpec};
    use ndarray::{array, Array2};

    #[test]
    fn identical_decoders_have_zero_gap() {
        let m = ProbeModel::constant(1, [0.3, -0.2]);
        let x = array![[1.0f32], [2.0], [-1.0]];
        assert_eq!(agreement_gap(&m, &m, x.view(), x.view(), &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn opposite_certain_decoders_have_gap_two() {
        let f1 = ProbeModel::constant(1, [50.0, -50.0]);
        let f2 = ProbeModel::constant(1, [-50.0, 50.0]);
        let x = array![[0.0f32], [1.0]];
        let d = agreement_gap(&f1, &f2, x.view(), x.view(), &[0, 1]).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_gap() {
        // softmax([0, ln 9]) = [0.1, 0.9]; softmax([0, ln 4]) = [0.2, 0.8].
        let f1 = ProbeModel::constant(1, [0.0, 9f64.ln()]);
        let f2 = ProbeModel::constant(1, [0.0, 4f64.ln()]);
        let x = array![[0.0f32]];
        let d = agreement_gap(&f1, &f2, x.view(), x.view(), &[0]).unwrap();
        assert!((d - 0.2).abs() < 1e-12, "{d}");
        assert!(agreement_gap(&f1, &f2, array![[0.0f32, 1.0]].view(), x.view(), &[0]).is_err());
    }

    #[test]
    fn zero_parameter_decoders_give_half() {
        let pair = DecoderPair {
            base: ProbeModel::constant(2, [0.0, 0.0]),
            unlearned: ProbeModel::constant(3, [0.0, 0.0]),
        };
        let (p1, p2) = pair
            .forget_probs(array![1.0f32, 2.0].view(), array![0.0f32, 1.0, 2.0].view())
            .unwrap();
        assert_eq!((p1, p2), (0.5, 0.5));
    }

    #[test]
    fn config_validation() {
        let mut cfg = RineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.betas = vec![4.0, 2.0];
        assert!(matches!(cfg.validate(), Err(RineError::Config(_))));
        cfg.betas = vec![1.0];
        cfg.agreement_tolerance = 2.5;
        assert!(matches!(cfg.validate(), Err(RineError::Config(_))));
    }

    #[test]
    fn featureless_decoders_agree_and_carry_nothing() {
        let n = 200;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let ds = RepresentationDataset::new(
            Array2::zeros((n, 0)),
            Array2::zeros((n, 0)),
            labels,
            None,
        )
        .unwrap();
        let sp = split(&ds, &SplitSpec::new(4)).unwrap();
        let est = fit_rine(&ds, &RineConfig::default(), &sp).unwrap();
        assert_eq!(est.i_cap_bits, 0.0);
        assert_eq!(est.d_final, 0.0);
        assert!(est.constraint_met);
    }
}
