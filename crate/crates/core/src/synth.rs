//! Synthetic representation datasets with known information structure.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, RepresentationDataset};
use crate::oracle::{embed_system, DiscreteSystem, OracleError};

pub const MIN_SIM_SAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Linear-Gaussian unlearning simulation.
///
/// With `t = 2Y - 1` and one noise draw `e` shared by both sides,
///
/// ```text
/// B = s·t·v_shared + s·unique_b·t·v_b + σ·e
/// U = ρ·s·t·v_shared             + σ·e
/// ```
///
/// `v_shared ⟂ v_b` are unit vectors. `ρ` scales the membership signal left in
/// `U`; at `ρ = 1` and `unique_b = 0` the two sides coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnSimConfig {
    pub n: usize,
    pub d: usize,
    pub signal_strength: f64,
    pub retention: f64,
    pub unique_b: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for UnlearnSimConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            d: 32,
            signal_strength: 2.0,
            retention: 1.0,
            unique_b: 0.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl UnlearnSimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SynthError::Config(msg));
        if self.n < MIN_SIM_SAMPLES {
            return bad(format!("n = {} below minimum {MIN_SIM_SAMPLES}", self.n));
        }
        if self.d < 2 {
            return bad(format!("d = {} must be at least 2", self.d));
        }
        if !(self.signal_strength > 0.0 && self.signal_strength.is_finite()) {
            return bad(format!("signal strength {} must be positive", self.signal_strength));
        }
        if !(0.0..=1.0).contains(&self.retention) {
            return bad(format!("retention {} outside [0, 1]", self.retention));
        }
        if !(0.0..=1.0).contains(&self.unique_b) {
            return bad(format!("unique_b {} outside [0, 1]", self.unique_b));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be positive", self.noise_sigma));
        }
        Ok(())
    }
}

fn gaussian_vector(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(d, || StandardNormal.sample(rng))
}

/// `k ≤ d` orthonormal directions by Gram-Schmidt on Gaussian draws.
pub fn orthonormal_directions(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    assert!(k <= d, "cannot draw {k} orthonormal vectors in dimension {d}");
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v = gaussian_vector(d, rng);
        for u in &out {
            let proj = v.dot(u);
            v.scaled_add(-proj, u);
        }
        let norm = v.dot(&v).sqrt();
        // A draw nearly inside the current span is discarded.
        if norm > 1e-6 {
            out.push(v / norm);
        }
    }
    out
}

pub fn gen_unlearning_sim(cfg: &UnlearnSimConfig) -> Result<RepresentationDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = orthonormal_directions(cfg.d, 2, &mut rng);
    let (v_shared, v_b) = (&dirs[0], &dirs[1]);
    let s = cfg.signal_strength;

    let mut base = Array2::<f32>::zeros((cfg.n, cfg.d));
    let mut unlearned = Array2::<f32>::zeros((cfg.n, cfg.d));
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let y: bool = rng.random();
        labels.push(u8::from(y));
        let t = if y { 1.0 } else { -1.0 };
        for j in 0..cfg.d {
            let e: f64 = StandardNormal.sample(&mut rng);
            let noise = cfg.noise_sigma * e;
            let shared = s * t * v_shared[j];
            base[[i, j]] = (shared + s * cfg.unique_b * t * v_b[j] + noise) as f32;
            unlearned[[i, j]] = (cfg.retention * shared + noise) as f32;
        }
    }
    Ok(RepresentationDataset::new(base, unlearned, labels, None)?)
}

/// A named gate embedded as noisy one-hot representations.
pub fn gen_gate(name: &str, n: usize, noise_sigma: f64, seed: u64) -> Result<RepresentationDataset> {
    Ok(embed_system(&DiscreteSystem::by_name(name)?, n, noise_sigma, seed)?)
}

/// Population with retain samples, forget samples whose membership signal was
/// removed from `U`, and forget samples whose signal survived in `U`.
///
/// ```text
/// B = s·1[forget]·v   + σ·e_b
/// U = s·1[residual]·v + σ·e_u
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n: usize,
    pub d: usize,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    /// Fraction of all samples in the forget set.
    pub forget_fraction: f64,
    /// Fraction of all samples that are forget samples with residual signal.
    pub residual_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 16,
            signal_strength: 3.0,
            noise_sigma: 1.0,
            forget_fraction: 0.5,
            residual_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedResidual {
    pub dataset: RepresentationDataset,
    /// `true` for forget samples whose signal remains in `U`.
    pub residual: Vec<bool>,
}

pub fn gen_planted_residual(cfg: &PlantedConfig) -> Result<PlantedResidual> {
    if cfg.n < MIN_SIM_SAMPLES || cfg.d == 0 {
        return Err(SynthError::Config(format!(
            "need n ≥ {MIN_SIM_SAMPLES} and d ≥ 1, got n = {}, d = {}",
            cfg.n, cfg.d
        )));
    }
    if !(0.0 < cfg.residual_fraction
        && cfg.residual_fraction < cfg.forget_fraction
        && cfg.forget_fraction < 1.0)
    {
        return Err(SynthError::Config(format!(
            "fractions must satisfy 0 < residual ({}) < forget ({}) < 1",
            cfg.residual_fraction, cfg.forget_fraction
        )));
    }
    if !(cfg.signal_strength > 0.0 && cfg.noise_sigma > 0.0) {
        return Err(SynthError::Config("signal strength and noise must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let v = orthonormal_directions(cfg.d, 1, &mut rng).remove(0);
    let n_forget = (cfg.forget_fraction * cfg.n as f64).round() as usize;
    let n_residual = (cfg.residual_fraction * cfg.n as f64).round() as usize;

    // 0 retain, 1 forget with signal removed, 2 forget with residual signal.
    let mut kind: Vec<u8> = (0..cfg.n)
        .map(|i| match i {
            i if i < n_residual => 2,
            i if i < n_forget => 1,
            _ => 0,
        })
        .collect();
    kind.shuffle(&mut rng);

    let mut base = Array2::<f32>::zeros((cfg.n, cfg.d));
    let mut unlearned = Array2::<f32>::zeros((cfg.n, cfg.d));
    for (i, &k) in kind.iter().enumerate() {
        let sb = if k > 0 { cfg.signal_strength } else { 0.0 };
        let su = if k == 2 { cfg.signal_strength } else { 0.0 };
        for j in 0..cfg.d {
            let eb: f64 = StandardNormal.sample(&mut rng);
            let eu: f64 = StandardNormal.sample(&mut rng);
            base[[i, j]] = (sb * v[j] + cfg.noise_sigma * eb) as f32;
            unlearned[[i, j]] = (su * v[j] + cfg.noise_sigma * eu) as f32;
        }
    }
    let labels = kind.iter().map(|&k| u8::from(k > 0)).collect();
    Ok(PlantedResidual {
        dataset: RepresentationDataset::new(base, unlearned, labels, None)?,
        residual: kind.iter().map(|&k| k == 2).collect(),
    })
}
