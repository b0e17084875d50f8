//! Inference-time risk score and abstention gate.
//!
//! `risk = ½(p1 + p2)·(1 - |p1 - p2|)` where `p1`, `p2` are the forget-class
//! probabilities of the base and unlearned decoders. A query is refused iff
//! `risk > τ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::infotheory::{entropy, InfoError};

pub const DEFAULT_TAU: f64 = 0.48;
pub const DEFAULT_RETAIN_CAP: f64 = 0.10;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("{name} = {value} is not a probability")]
    Domain { name: &'static str, value: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Info(#[from] InfoError),
}

pub type Result<T> = std::result::Result<T, RiskError>;

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(RiskError::Domain { name, value })
    }
}

pub fn risk_score(p1: f64, p2: f64) -> Result<f64> {
    check_unit("p1", p1)?;
    check_unit("p2", p2)?;
    Ok(0.5 * (p1 + p2) * (1.0 - (p1 - p2).abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Answer,
    Abstain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecision {
    pub p1: f64,
    pub p2: f64,
    pub mean_forget: f64,
    /// `1 - |p1 - p2|`.
    pub agreement: f64,
    /// `|p1 - p2|`.
    pub disagreement: f64,
    pub risk_score: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

pub fn abstain(p1: f64, p2: f64, tau: f64) -> Result<RiskDecision> {
    check_unit("tau", tau)?;
    let risk = risk_score(p1, p2)?;
    let disagreement = (p1 - p2).abs();
    Ok(RiskDecision {
        p1,
        p2,
        mean_forget: 0.5 * (p1 + p2),
        agreement: 1.0 - disagreement,
        disagreement,
        risk_score: risk,
        threshold: tau,
        verdict: if risk > tau {
            Verdict::Abstain
        } else {
            Verdict::Answer
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub risk_score: f64,
    pub is_forget: bool,
    /// Forget sample whose membership signal survived unlearning.
    pub is_residual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau: f64,
    pub retain_abstention: f64,
    pub residual_abstention: f64,
    /// Fraction of residual samples answered.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub retain_cap: f64,
    /// Index into `rows`; `None` when no τ respects the retain cap.
    pub recommended: Option<usize>,
}

impl Sweep {
    pub fn recommended_row(&self) -> Option<&SweepRow> {
        self.recommended.map(|i| &self.rows[i])
    }
}

/// `0.00, 0.01, …, 1.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

fn rate(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Abstention rates per τ. The recommended τ maximizes residual abstention
/// among rows with retain abstention at most `retain_cap`; ties go to the
/// median such τ.
pub fn sweep_threshold(samples: &[ScoredSample], grid: &[f64], retain_cap: f64) -> Result<Sweep> {
    if samples.is_empty() {
        return Err(RiskError::Empty("no scored samples"));
    }
    if grid.is_empty() {
        return Err(RiskError::Empty("threshold grid"));
    }
    for &tau in grid {
        check_unit("tau", tau)?;
    }
    for s in samples {
        check_unit("risk_score", s.risk_score)?;
    }
    check_unit("retain_cap", retain_cap)?;

    let retain = samples.iter().filter(|s| !s.is_forget).count();
    let residual = samples.iter().filter(|s| s.is_residual).count();
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&tau| {
            let refused = |pred: &dyn Fn(&ScoredSample) -> bool| {
                samples.iter().filter(|s| pred(s) && s.risk_score > tau).count()
            };
            let retain_refused = refused(&|s| !s.is_forget);
            let residual_refused = refused(&|s| s.is_residual);
            SweepRow {
                tau,
                retain_abstention: rate(retain_refused, retain),
                residual_abstention: rate(residual_refused, residual),
                leakage: rate(residual - residual_refused, residual),
            }
        })
        .collect();

    let feasible: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].retain_abstention <= retain_cap)
        .collect();
    let best = feasible
        .iter()
        .map(|&i| rows[i].residual_abstention)
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = feasible
        .into_iter()
        .filter(|&i| rows[i].residual_abstention == best)
        .collect();
    let recommended = (!ties.is_empty()).then(|| ties[(ties.len() - 1) / 2]);
    Ok(Sweep {
        rows,
        retain_cap,
        recommended,
    })
}

/// Abstains iff the entropy of `p` exceeds `tau_h` bits.
pub fn entropy_baseline(p: &[f64], tau_h: f64) -> Result<Verdict> {
    Ok(if entropy(p)? > tau_h {
        Verdict::Abstain
    } else {
        Verdict::Answer
    })
}

/// One line of the per-sample decision stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub id: String,
    pub p1: f64,
    pub p2: f64,
    pub risk_score: f64,
    pub verdict: Verdict,
}

impl DecisionRecord {
    pub fn new(id: impl Into<String>, d: &RiskDecision) -> Self {
        Self {
            id: id.into(),
            p1: d.p1,
            p2: d.p2,
            risk_score: d.risk_score,
            verdict: d.verdict,
        }
    }
}
