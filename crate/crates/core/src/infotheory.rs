//! Discrete information-theory numerics shared by the audit.
//!
//! Every quantity here is measured in bits (base-2 logarithms). Natural-log
//! values are converted at the boundary with [`nats_to_bits`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on probability normalization.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Largest alphabet size permitted on any axis of a [`JointPmf`].
pub const MAX_AXIS_SIZE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("negative or non-finite probability {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("pmf shape {shape:?} holds {expected} cells but {actual} probabilities were given")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("axis size {0} outside 1..={MAX_AXIS_SIZE}")]
    AxisSize(usize),

    #[error("invalid axis selection: {0}")]
    Axis(String),

    #[error("mutual information {mi} exceeds label entropy {entropy}")]
    Information { entropy: f64, mi: f64 },

    #[error("tight Fano bound is only defined for binary labels, got {0} classes")]
    Unsupported(usize),

    #[error("need at least one positive and one negative label")]
    SingleClass,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, InfoError>;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for (index, &value) in p.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(InfoError::InvalidProbability { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(InfoError::NotNormalized(sum));
    }
    Ok(())
}

/// `-Σ p log2 p` without validation; `0 log 0 = 0`.
pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum();
    h.max(0.0)
}

/// Shannon entropy of a probability vector, in bits.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(entropy_unchecked(p))
}

/// Binary entropy `h2(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_unchecked(&[p, 1.0 - p])
}

/// Empirical entropy of binary labels, in bits.
pub fn label_entropy(labels: impl IntoIterator<Item = u8>) -> f64 {
    let mut counts = [0usize; 2];
    let mut n = 0usize;
    for y in labels {
        counts[(y != 0) as usize] += 1;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let p1 = counts[1] as f64 / n as f64;
    binary_entropy(p1)
}

/// A finite joint probability table stored in row-major order.
///
/// The last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    shape: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(shape: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(InfoError::Axis("pmf needs at least one axis".into()));
        }
        for &s in &shape {
            if s == 0 || s > MAX_AXIS_SIZE {
                return Err(InfoError::AxisSize(s));
            }
        }
        let expected: usize = shape.iter().product();
        if expected != probs.len() {
            return Err(InfoError::ShapeMismatch {
                shape,
                expected,
                actual: probs.len(),
            });
        }
        check_distribution(&probs)?;
        Ok(Self { shape, probs })
    }

    /// Builds a pmf from a weight function over all cells, normalizing the
    /// total mass to one.
    pub fn from_fn(shape: Vec<usize>, mut weight: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let total: usize = shape.iter().product();
        let mut probs = Vec::with_capacity(total);
        let mut index = vec![0usize; shape.len()];
        for flat in 0..total {
            unravel(flat, &shape, &mut index);
            probs.push(weight(&index));
        }
        let sum: f64 = probs.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(InfoError::NotNormalized(sum));
        }
        for p in &mut probs {
            *p /= sum;
        }
        Self::new(shape, probs)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Probability of a single cell.
    pub fn get(&self, index: &[usize]) -> f64 {
        self.probs[ravel(index, &self.shape)]
    }

    /// Iterates over `(multi-index, probability)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(flat, &p)| {
            let mut index = vec![0; self.shape.len()];
            unravel(flat, &self.shape, &mut index);
            (index, p)
        })
    }

    /// Marginal table over `axes`, flattened in the order the axes are given.
    pub fn marginal(&self, axes: &[usize]) -> Result<Vec<f64>> {
        self.check_axes(axes)?;
        let sub_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let mut out = vec![0.0; sub_shape.iter().product()];
        let mut index = vec![0usize; self.shape.len()];
        let mut sub = vec![0usize; axes.len()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            unravel(flat, &self.shape, &mut index);
            for (slot, &a) in sub.iter_mut().zip(axes) {
                *slot = index[a];
            }
            out[ravel(&sub, &sub_shape)] += p;
        }
        Ok(out)
    }

    /// Joint entropy of the variables on `axes`, in bits.
    pub fn entropy_of(&self, axes: &[usize]) -> Result<f64> {
        Ok(entropy_unchecked(&self.marginal(axes)?))
    }

    fn check_axes(&self, axes: &[usize]) -> Result<()> {
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.shape.len() {
                return Err(InfoError::Axis(format!(
                    "axis {a} out of range for {}-axis pmf",
                    self.shape.len()
                )));
            }
            if axes[..i].contains(&a) {
                return Err(InfoError::Axis(format!("axis {a} listed twice")));
            }
        }
        Ok(())
    }
}

fn ravel(index: &[usize], shape: &[usize]) -> usize {
    index
        .iter()
        .zip(shape)
        .fold(0, |acc, (&i, &s)| acc * s + i)
}

fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for (slot, &s) in out.iter_mut().zip(shape).rev() {
        *slot = flat % s;
        flat /= s;
    }
}

/// `I(A;B) = H(A) + H(B) - H(A,B)` in bits, clamped at zero.
pub fn mutual_information(pmf: &JointPmf, axes_a: &[usize], axes_b: &[usize]) -> Result<f64> {
    if axes_a.is_empty() || axes_b.is_empty() {
        return Err(InfoError::Axis("axis sets must be nonempty".into()));
    }
    if axes_a.iter().any(|a| axes_b.contains(a)) {
        return Err(InfoError::Axis(format!(
            "axis sets {axes_a:?} and {axes_b:?} overlap"
        )));
    }
    let joint: Vec<usize> = axes_a.iter().chain(axes_b).copied().collect();
    let h_a = pmf.entropy_of(axes_a)?;
    let h_b = pmf.entropy_of(axes_b)?;
    let h_ab = pmf.entropy_of(&joint)?;
    Ok((h_a + h_b - h_ab).max(0.0))
}

/// Lower bounds on a classifier's error probability from Fano's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoBound {
    /// `max(0, H(Y) - I(Y;Z) - 1)`, with a 1-bit denominator. Never exceeds
    /// zero for binary labels.
    pub weak_bound: f64,
    /// Smallest `p` in `[0, 1/2]` with `h2(p) = H(Y) - I(Y;Z)`. Binary labels only.
    pub tight_binary_bound: Option<f64>,
}

/// Fano error bounds from label entropy and mutual information (both in bits).
///
/// The tight form is present only when `num_classes == 2`.
pub fn fano_bounds(h_y_bits: f64, i_yz_bits: f64, num_classes: usize) -> Result<FanoBound> {
    check_fano_inputs(h_y_bits, i_yz_bits, num_classes)?;
    let weak_bound = (h_y_bits - i_yz_bits - 1.0).clamp(0.0, 1.0);
    let tight_binary_bound = if num_classes == 2 {
        Some(inverse_binary_entropy(h_y_bits - i_yz_bits))
    } else {
        None
    };
    Ok(FanoBound {
        weak_bound,
        tight_binary_bound,
    })
}

/// The inverse-binary-entropy Fano bound; errors unless `num_classes == 2`.
pub fn tight_fano_bound(h_y_bits: f64, i_yz_bits: f64, num_classes: usize) -> Result<f64> {
    check_fano_inputs(h_y_bits, i_yz_bits, num_classes)?;
    if num_classes != 2 {
        return Err(InfoError::Unsupported(num_classes));
    }
    Ok(inverse_binary_entropy(h_y_bits - i_yz_bits))
}

fn check_fano_inputs(h_y_bits: f64, i_yz_bits: f64, num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(InfoError::Degenerate(format!(
            "Fano bound needs at least 2 classes, got {num_classes}"
        )));
    }
    if !h_y_bits.is_finite() || !i_yz_bits.is_finite() || h_y_bits < 0.0 || i_yz_bits < 0.0 {
        return Err(InfoError::Degenerate(format!(
            "entropy {h_y_bits} and information {i_yz_bits} must be finite and nonnegative"
        )));
    }
    if i_yz_bits > h_y_bits + NORMALIZATION_TOL {
        return Err(InfoError::Information {
            entropy: h_y_bits,
            mi: i_yz_bits,
        });
    }
    Ok(())
}

/// Lower root of `h2(p) = target` on `[0, 1/2]` by bisection to 1e-9.
fn inverse_binary_entropy(target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    if target >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Area under the ROC curve as the Mann-Whitney statistic; ties count one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(InfoError::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(InfoError::SingleClass);
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(InfoError::Degenerate(format!("score {bad} is not comparable")));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y != 0)
        .map(|(r, _)| r)
        .sum();
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok(((rank_sum - p * (p + 1.0) / 2.0) / (p * q)).clamp(0.0, 1.0))
}

/// 1-based ranks with ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson, Spearman and ordinary-least-squares summary of `y` against `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub n: usize,
    pub pearson_r: f64,
    pub spearman_rho: f64,
    pub ols_slope: f64,
    pub ols_intercept: f64,
}

pub fn correlation(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(InfoError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(InfoError::Degenerate(format!(
            "need at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(InfoError::Degenerate("non-finite value".into()));
    }
    let (pearson_r, ols_slope, ols_intercept) = pearson_and_fit(x, y)?;
    let (spearman_rho, _, _) = pearson_and_fit(&average_ranks(x), &average_ranks(y))?;
    Ok(Correlation {
        n: x.len(),
        pearson_r,
        spearman_rho,
        ols_slope,
        ols_intercept,
    })
}

fn pearson_and_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(InfoError::Degenerate("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let slope = sxy / sxx;
    Ok((r, slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gate(f: impl Fn(usize, usize) -> usize) -> JointPmf {
        JointPmf::from_fn(vec![2, 2, 2], |i| {
            if f(i[0], i[1]) == i[2] {
                0.25
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&[0.5, 0.5]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&[1.0, 0.0]).unwrap(), 0.0, epsilon = 1e-12);
        // -(0.25 log2 0.25 + 0.75 log2 0.75) = 0.5 + 0.311278...
        assert_abs_diff_eq!(entropy(&[0.25, 0.75]).unwrap(), 0.8113, epsilon = 1e-4);
    }

    #[test]
    fn entropy_rejects_unnormalized() {
        assert!(matches!(
            entropy(&[0.5, 0.6]),
            Err(InfoError::NotNormalized(_))
        ));
        assert!(matches!(
            entropy(&[1.5, -0.5]),
            Err(InfoError::InvalidProbability { index: 1, .. })
        ));
    }

    #[test]
    fn gate_mutual_information() {
        let and = gate(|a, b| a & b);
        let xor = gate(|a, b| a ^ b);
        let copy = JointPmf::from_fn(vec![2, 2, 2], |i| {
            if i[0] == i[1] && i[1] == i[2] {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        // H(Y) = h2(1/4) = 0.811278, H(Y|X1) = 0.5.
        assert_abs_diff_eq!(
            mutual_information(&and, &[2], &[0]).unwrap(),
            0.3113,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            mutual_information(&xor, &[2], &[0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information(&xor, &[2], &[0, 1]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mutual_information(&copy, &[2], &[0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn overlapping_axes_rejected() {
        let xor = gate(|a, b| a ^ b);
        assert!(matches!(
            mutual_information(&xor, &[0, 2], &[2]),
            Err(InfoError::Axis(_))
        ));
    }

    #[test]
    fn fano_examples() {
        let perfect = fano_bounds(1.0, 1.0, 2).unwrap();
        assert_eq!(perfect.weak_bound, 0.0);
        assert_abs_diff_eq!(perfect.tight_binary_bound.unwrap(), 0.0, epsilon = 1e-9);

        let none = fano_bounds(1.0, 0.0, 2).unwrap();
        assert_eq!(none.weak_bound, 0.0);
        assert_abs_diff_eq!(none.tight_binary_bound.unwrap(), 0.5, epsilon = 1e-9);

        // Oracle: dense scan of h2 on [0, 0.5] for the first crossing of 0.5 bits.
        let scanned = (0..=500_000)
            .map(|k| k as f64 * 1e-6)
            .find(|&p| binary_entropy(p) >= 0.5)
            .unwrap();
        let half = tight_fano_bound(1.0, 0.5, 2).unwrap();
        assert_abs_diff_eq!(half, scanned, epsilon = 2e-6);
        assert_abs_diff_eq!(half, 0.1100, epsilon = 1e-4);
    }

    #[test]
    fn fano_errors() {
        assert!(matches!(
            fano_bounds(0.5, 0.8, 2),
            Err(InfoError::Information { .. })
        ));
        assert!(matches!(
            tight_fano_bound(1.5, 0.2, 3),
            Err(InfoError::Unsupported(3))
        ));
        assert!(fano_bounds(1.5, 0.2, 3).unwrap().tight_binary_bound.is_none());
    }

    fn brute_force_auroc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), 0.5);
        assert_abs_diff_eq!(
            auroc(&[0.9, 0.4, 0.5, 0.1], &[1, 1, 0, 0]).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        assert!(matches!(
            auroc(&[0.1, 0.2], &[1, 1]),
            Err(InfoError::SingleClass)
        ));
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = correlation(&x, &y).unwrap();
        assert_abs_diff_eq!(c.pearson_r, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ols_slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ols_intercept, 1.0, epsilon = 1e-12);

        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let c = correlation(&x, &neg).unwrap();
        assert_abs_diff_eq!(c.pearson_r, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.spearman_rho, -1.0, epsilon = 1e-12);

        // 1 - 6 * (0 + 1 + 1 + 0) / (4 * 15) = 0.8
        let c = correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(c.spearman_rho, 0.8, epsilon = 1e-12);

        assert!(matches!(
            correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(InfoError::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn entropy_bounded_by_uniform(weights in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let uniform = vec![1.0 / p.len() as f64; p.len()];
            prop_assert!(entropy(&p).unwrap() <= entropy(&uniform).unwrap() + 1e-9);
        }

        #[test]
        fn mutual_information_symmetric_and_zero_on_products(
            a in prop::collection::vec(0.01f64..1.0, 2..5),
            b in prop::collection::vec(0.01f64..1.0, 2..5),
            noise in prop::collection::vec(0.0f64..1.0, 16),
        ) {
            let shape = vec![a.len(), b.len()];
            let product = JointPmf::from_fn(shape.clone(), |i| a[i[0]] * b[i[1]]).unwrap();
            prop_assert!(mutual_information(&product, &[0], &[1]).unwrap().abs() < 1e-9);

            let mixed = JointPmf::from_fn(shape, |i| a[i[0]] * b[i[1]] + noise[i[0] * 4 + i[1]]).unwrap();
            let ab = mutual_information(&mixed, &[0], &[1]).unwrap();
            let ba = mutual_information(&mixed, &[1], &[0]).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn tight_fano_monotone(h in 0.0f64..1.0, i1 in 0.0f64..1.0, i2 in 0.0f64..1.0) {
            let (lo, hi) = if i1 <= i2 { (i1 * h, i2 * h) } else { (i2 * h, i1 * h) };
            let b_lo = tight_fano_bound(h, lo, 2).unwrap();
            let b_hi = tight_fano_bound(h, hi, 2).unwrap();
            prop_assert!(b_hi <= b_lo + 1e-9);
            let weak = fano_bounds(h, lo, 2).unwrap().weak_bound;
            prop_assert!(b_lo >= weak);
        }

        #[test]
        fn auroc_matches_pairs_and_flips(
            data in prop::collection::vec((-5i32..5, 0u8..2), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<u8> = data.iter().map(|(_, y)| *y).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let a = auroc(&scores, &labels).unwrap();
            prop_assert!((a - brute_force_auroc(&scores, &labels)).abs() < 1e-12);
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            // With ties both sides give half credit, so the identity holds in general.
            prop_assert!((a + auroc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
