//! Exact intersection information on small discrete systems.
//!
//! `I^∧(Y; X1, X2) = max I(Y; Q)` over variables `Q` that are a deterministic
//! function of each source almost surely. Only the partition a map induces on
//! an alphabet matters for `I(Y;Q)`, so `f1` ranges over set partitions of the
//! `X1` alphabet (restricted growth strings) and `f2` is forced on every `x2`
//! in the support. Pairs related by a relabeling of `Q` are visited once.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, RepresentationDataset};
use crate::infotheory::{entropy_unchecked, mutual_information, InfoError, JointPmf};

pub const MAX_ALPHABET: usize = 8;
pub const MIN_EMBED_SAMPLES: usize = 100;

/// Improvement below which a later witness does not replace an earlier one.
const TIE_TOL: f64 = 1e-12;

const X1: usize = 0;
const X2: usize = 1;
const Y: usize = 2;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what} = {value} exceeds the limit of {MAX_ALPHABET}")]
    Size { what: &'static str, value: usize },

    #[error("unknown gate {0:?}; expected and, xor, copy or unique1")]
    UnknownGate(String),

    #[error("embedding needs a binary target, system has {0} target symbols")]
    NonBinaryTarget(usize),

    #[error("{0}")]
    Bounds(String),

    #[error(transparent)]
    Info(#[from] InfoError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Joint pmf over `(X1, X2, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSystem {
    pmf: JointPmf,
}

impl DiscreteSystem {
    pub fn new(pmf: JointPmf) -> Result<Self> {
        if pmf.ndim() != 3 {
            return Err(OracleError::Info(InfoError::Axis(format!(
                "system pmf must have 3 axes, got {}",
                pmf.ndim()
            ))));
        }
        for (what, &k) in ["|X1|", "|X2|", "|Y|"].into_iter().zip(pmf.shape()) {
            if k > MAX_ALPHABET {
                return Err(OracleError::Size { what, value: k });
            }
        }
        Ok(Self { pmf })
    }

    /// Row-major probabilities with `y` fastest.
    pub fn from_table(k1: usize, k2: usize, ky: usize, probs: Vec<f64>) -> Result<Self> {
        Self::new(JointPmf::new(vec![k1, k2, ky], probs)?)
    }

    /// Independent uniform bits `X1, X2` and `Y = g(X1, X2)`.
    fn gate(g: impl Fn(usize, usize) -> usize) -> Self {
        let pmf = JointPmf::from_fn(vec![2, 2, 2], |ix| {
            if g(ix[X1], ix[X2]) == ix[Y] {
                1.0
            } else {
                0.0
            }
        })
        .expect("gate tables are valid");
        Self { pmf }
    }

    pub fn and() -> Self {
        Self::gate(|a, b| a & b)
    }

    pub fn xor() -> Self {
        Self::gate(|a, b| a ^ b)
    }

    /// `X1 = X2 = Y`, a uniform bit.
    pub fn copy() -> Self {
        let pmf = JointPmf::from_fn(vec![2, 2, 2], |ix| {
            if ix[X1] == ix[X2] && ix[X2] == ix[Y] {
                1.0
            } else {
                0.0
            }
        })
        .expect("copy table is valid");
        Self { pmf }
    }

    /// `Y = X1` with `X2` an independent uniform bit.
    pub fn unique1() -> Self {
        Self::gate(|a, _| a)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "and" => Ok(Self::and()),
            "xor" => Ok(Self::xor()),
            "copy" => Ok(Self::copy()),
            "unique1" => Ok(Self::unique1()),
            _ => Err(OracleError::UnknownGate(name.to_string())),
        }
    }

    pub fn pmf(&self) -> &JointPmf {
        &self.pmf
    }

    /// `(|X1|, |X2|, |Y|)`.
    pub fn alphabet_sizes(&self) -> (usize, usize, usize) {
        let s = self.pmf.shape();
        (s[X1], s[X2], s[Y])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub i_wedge_bits: f64,
    /// `f1[x1]` for every symbol of `X1`.
    pub f1: Vec<usize>,
    /// `f2[x2]`; symbols outside the support map to 0.
    pub f2: Vec<usize>,
    /// Size of the `Q` alphabet searched.
    pub q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidBounds {
    pub i1: f64,
    pub i2: f64,
    pub i12: f64,
    pub i_wedge: f64,
    pub uniq1: f64,
    pub uniq2: f64,
    pub syn: f64,
}

/// Calls `visit` on every restricted growth string of length `len` with at
/// most `max_blocks` distinct values, in lexicographic order.
fn for_each_partition(len: usize, max_blocks: usize, mut visit: impl FnMut(&[usize])) {
    if len == 0 {
        visit(&[]);
        return;
    }
    let mut rgs = vec![0usize; len];
    loop {
        visit(&rgs);
        let mut i = len;
        loop {
            if i == 1 {
                return;
            }
            i -= 1;
            let blocks_before = rgs[..i].iter().max().map_or(0, |m| m + 1);
            if rgs[i] + 1 <= blocks_before && rgs[i] + 1 < max_blocks {
                rgs[i] += 1;
                rgs[i + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
        }
    }
}

/// `I(Y; f1(X1))` in bits from the `p(x1, y)` table.
fn info_of_map(p_x1y: &Array2<f64>, f1: &[usize], q: usize) -> f64 {
    let ky = p_x1y.ncols();
    let mut p_qy = vec![0.0; q * ky];
    for (x1, &b) in f1.iter().enumerate() {
        for y in 0..ky {
            p_qy[b * ky + y] += p_x1y[[x1, y]];
        }
    }
    let mut p_q = vec![0.0; q];
    let mut p_y = vec![0.0; ky];
    for b in 0..q {
        for y in 0..ky {
            p_q[b] += p_qy[b * ky + y];
            p_y[y] += p_qy[b * ky + y];
        }
    }
    let mi = entropy_unchecked(&p_q) + entropy_unchecked(&p_y) - entropy_unchecked(&p_qy);
    mi.max(0.0)
}

/// Exhaustive search for the most informative common function of both sources.
pub fn exact_i_wedge(sys: &DiscreteSystem, max_q: usize) -> Result<IntersectionResult> {
    if max_q == 0 || max_q > MAX_ALPHABET {
        return Err(OracleError::Size { what: "max_q", value: max_q });
    }
    let (k1, k2, ky) = sys.alphabet_sizes();
    let q = max_q.min(k1.max(k2)).max(1);

    let mut p_x1y = Array2::<f64>::zeros((k1, ky));
    let mut support = vec![false; k1 * k2];
    for (ix, p) in sys.pmf.cells() {
        p_x1y[[ix[X1], ix[Y]]] += p;
        if p > 0.0 {
            support[ix[X1] * k2 + ix[X2]] = true;
        }
    }

    let mut best: Option<IntersectionResult> = None;
    let mut f2 = vec![usize::MAX; k2];
    for_each_partition(k1, q, |f1| {
        f2.iter_mut().for_each(|v| *v = usize::MAX);
        for x1 in 0..k1 {
            for x2 in 0..k2 {
                if !support[x1 * k2 + x2] {
                    continue;
                }
                if f2[x2] == usize::MAX {
                    f2[x2] = f1[x1];
                } else if f2[x2] != f1[x1] {
                    return;
                }
            }
        }
        let info = info_of_map(&p_x1y, f1, q);
        if best.as_ref().is_none_or(|b| info > b.i_wedge_bits + TIE_TOL) {
            best = Some(IntersectionResult {
                i_wedge_bits: info,
                f1: f1.to_vec(),
                f2: f2.iter().map(|&v| if v == usize::MAX { 0 } else { v }).collect(),
                q,
            });
        }
    });
    // The constant map is always consistent.
    Ok(best.expect("constant partition visited"))
}

/// Exact single-source and joint information together with the decomposition
/// that takes `I^∧` as the redundancy.
pub fn exact_pid_bounds(sys: &DiscreteSystem, max_q: usize) -> Result<PidBounds> {
    let i_wedge = exact_i_wedge(sys, max_q)?.i_wedge_bits;
    let i1 = mutual_information(&sys.pmf, &[Y], &[X1])?;
    let i2 = mutual_information(&sys.pmf, &[Y], &[X2])?;
    let i12 = mutual_information(&sys.pmf, &[Y], &[X1, X2])?;
    let uniq1 = i1 - i_wedge;
    let uniq2 = i2 - i_wedge;
    Ok(PidBounds {
        i1,
        i2,
        i12,
        i_wedge,
        uniq1,
        uniq2,
        syn: i12 - uniq1 - uniq2 - i_wedge,
    })
}

/// Samples `n` triples and encodes `x1`, `x2` as one-hot rows with additive
/// Gaussian noise of scale `noise_sigma`, independently per side.
pub fn embed_system(
    sys: &DiscreteSystem,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<RepresentationDataset> {
    if n < MIN_EMBED_SAMPLES {
        return Err(OracleError::Bounds(format!(
            "n = {n} below minimum {MIN_EMBED_SAMPLES}"
        )));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(OracleError::Bounds(format!("noise sigma {noise_sigma} must be ≥ 0")));
    }
    let (k1, k2, ky) = sys.alphabet_sizes();
    if ky != 2 {
        return Err(OracleError::NonBinaryTarget(ky));
    }
    let cells: Vec<(Vec<usize>, f64)> = sys.pmf.cells().collect();
    let index = WeightedIndex::new(cells.iter().map(|(_, p)| *p))
        .map_err(|e| OracleError::Bounds(format!("pmf cannot be sampled: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = Array2::<f32>::zeros((n, k1));
    let mut unlearned = Array2::<f32>::zeros((n, k2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let ix = &cells[index.sample(&mut rng)].0;
        labels.push(ix[Y] as u8);
        for (row, hot) in [(&mut base, ix[X1]), (&mut unlearned, ix[X2])] {
            for j in 0..row.ncols() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let value = if j == hot { 1.0 } else { 0.0 } + noise_sigma * noise;
                row[[i, j]] = value as f32;
            }
        }
    }
    Ok(RepresentationDataset::new(base, unlearned, labels, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bell(n: usize) -> usize {
        let mut count = 0;
        for_each_partition(n, n.max(1), |_| count += 1);
        count
    }

    #[test]
    fn partition_counts() {
        assert_eq!(
            (0..=8).map(bell).collect::<Vec<_>>(),
            vec![1, 1, 2, 5, 15, 52, 203, 877, 4140]
        );
        let mut two_blocks = 0;
        for_each_partition(4, 2, |_| two_blocks += 1);
        // S(4,1) + S(4,2)
        assert_eq!(two_blocks, 8);
    }

    #[test]
    fn gates() {
        assert_abs_diff_eq!(exact_i_wedge(&DiscreteSystem::and(), 4).unwrap().i_wedge_bits, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exact_i_wedge(&DiscreteSystem::xor(), 4).unwrap().i_wedge_bits, 0.0, epsilon = 1e-12);
        let copy = exact_i_wedge(&DiscreteSystem::copy(), 4).unwrap();
        assert_abs_diff_eq!(copy.i_wedge_bits, 1.0, epsilon = 1e-12);
        assert_eq!((copy.f1.as_slice(), copy.f2.as_slice()), (&[0, 1][..], &[0, 1][..]));
    }

    #[test]
    fn constant_target() {
        let sys = DiscreteSystem::from_table(2, 2, 1, vec![0.25; 4]).unwrap();
        assert_eq!(exact_i_wedge(&sys, 2).unwrap().i_wedge_bits, 0.0);
    }

    #[test]
    fn size_limits() {
        assert!(matches!(
            exact_i_wedge(&DiscreteSystem::and(), 9),
            Err(OracleError::Size { what: "max_q", .. })
        ));
        assert!(matches!(
            DiscreteSystem::from_table(9, 1, 1, vec![1.0 / 9.0; 9]),
            Err(OracleError::Size { what: "|X1|", .. })
        ));
        assert!(DiscreteSystem::by_name("nand").is_err());
    }

    #[test]
    fn pid_tables() {
        let x = exact_pid_bounds(&DiscreteSystem::xor(), 4).unwrap();
        assert_abs_diff_eq!(x.i1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.i12, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.syn, 1.0, epsilon = 1e-12);
        let c = exact_pid_bounds(&DiscreteSystem::copy(), 4).unwrap();
        assert_abs_diff_eq!(c.uniq1 + c.uniq2 + c.syn, 0.0, epsilon = 1e-12);
        let u = exact_pid_bounds(&DiscreteSystem::unique1(), 4).unwrap();
        assert_abs_diff_eq!(u.uniq1, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.i2 + u.syn + u.i_wedge, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn embedding_is_deterministic_one_hot() {
        let a = embed_system(&DiscreteSystem::copy(), 200, 0.0, 5).unwrap();
        let b = embed_system(&DiscreteSystem::copy(), 200, 0.0, 5).unwrap();
        assert_eq!(a, b);
        for i in 0..a.n() {
            let y = a.labels()[i] as usize;
            assert_eq!(a.base_row(i)[y], 1.0);
            assert_eq!(a.unlearned_row(i).sum(), 1.0);
        }
        assert!(embed_system(&DiscreteSystem::copy(), 50, 0.0, 5).is_err());
        let three = DiscreteSystem::from_table(1, 1, 3, vec![1.0 / 3.0; 3]).unwrap();
        assert!(matches!(embed_system(&three, 200, 0.1, 0), Err(OracleError::NonBinaryTarget(3))));
    }
}
