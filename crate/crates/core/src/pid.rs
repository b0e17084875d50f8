//! Two-source decomposition of membership information.
//!
//! Given `I(Y;B)`, `I(Y;U)`, `I(Y;B,U)` and the redundancy `I_cap`:
//!
//! ```text
//! I(Y;B,U) = I_uniq^B + I_uniq^U + I_cap + I_syn
//! I(Y;B)   = I_uniq^B + I_cap
//! I(Y;U)   = I_uniq^U + I_cap
//! ```
//!
//! `I_uniq^B` is the unlearned knowledge, `I_cap` the residual knowledge.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probe::{MiEstimate, Provenance};
use crate::rine::RedundancyEstimate;

/// Slack on the `I_cap ≤ min(I(Y;B), I(Y;U))` contract.
pub const CONTRACT_TOL: f64 = 1e-12;

pub const DEFAULT_PASS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum PidError {
    #[error("estimates come from different data families: {0} vs {1}")]
    Provenance(String, String),

    #[error("redundancy {i_cap} bits exceeds single-source minimum {min_mi} bits")]
    UpstreamContract { i_cap: f64, min_mi: f64 },

    #[error("non-finite or negative input {name} = {value}")]
    Input { name: &'static str, value: f64 },
}

pub type Result<T> = std::result::Result<T, PidError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidReport {
    pub mi_b: f64,
    pub mi_u: f64,
    pub mi_joint: f64,
    pub i_cap: f64,
    pub i_uniq_b: f64,
    pub i_uniq_u: f64,
    pub i_syn: f64,
    pub i_uniq_b_raw: f64,
    pub i_uniq_u_raw: f64,
    pub i_syn_raw: f64,
    /// Shared data family of every upstream estimate; absent for bare values.
    pub provenance: Option<PidProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PidProvenance {
    pub family: String,
    pub probe_seed: u64,
    pub rine_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub residual_bits: f64,
    pub unlearned_bits: f64,
    pub threshold: f64,
    pub verdict: AuditVerdict,
}

impl PidReport {
    /// Decomposition from bare values. Unique terms are exact differences;
    /// synergy is the remainder of the joint information.
    pub fn from_values(mi_b: f64, mi_u: f64, mi_joint: f64, i_cap: f64) -> Result<Self> {
        for (name, value) in [
            ("mi_b", mi_b),
            ("mi_u", mi_u),
            ("mi_joint", mi_joint),
            ("i_cap", i_cap),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(PidError::Input { name, value });
            }
        }
        let min_mi = mi_b.min(mi_u);
        if i_cap > min_mi + CONTRACT_TOL {
            return Err(PidError::UpstreamContract { i_cap, min_mi });
        }
        let i_uniq_b_raw = mi_b - i_cap;
        let i_uniq_u_raw = mi_u - i_cap;
        let i_syn_raw = mi_joint - i_uniq_b_raw - i_uniq_u_raw - i_cap;
        Ok(Self {
            mi_b,
            mi_u,
            mi_joint,
            i_cap,
            // Within the contract slack the differences can dip below zero only by rounding.
            i_uniq_b: i_uniq_b_raw.max(0.0),
            i_uniq_u: i_uniq_u_raw.max(0.0),
            i_syn: i_syn_raw.max(0.0),
            i_uniq_b_raw,
            i_uniq_u_raw,
            i_syn_raw,
            provenance: None,
        })
    }
}

/// Combines estimates computed on one dataset, split and seed family.
pub fn assemble(
    mi_b: &MiEstimate,
    mi_u: &MiEstimate,
    mi_joint: &MiEstimate,
    red: &RedundancyEstimate,
) -> Result<PidReport> {
    let reference: &Provenance = &mi_b.provenance;
    for other in [&mi_u.provenance, &mi_joint.provenance, &red.provenance] {
        if other.family != reference.family {
            return Err(PidError::Provenance(
                reference.family.clone(),
                other.family.clone(),
            ));
        }
    }
    if mi_u.provenance.seed != reference.seed || mi_joint.provenance.seed != reference.seed {
        return Err(PidError::Provenance(
            format!("{}@{}", reference.family, reference.seed),
            format!("probe seeds {} / {}", mi_u.provenance.seed, mi_joint.provenance.seed),
        ));
    }
    let mut report = PidReport::from_values(mi_b.mi_bits, mi_u.mi_bits, mi_joint.mi_bits, red.i_cap_bits)?;
    report.provenance = Some(PidProvenance {
        family: reference.family.clone(),
        probe_seed: reference.seed,
        rine_seed: red.provenance.seed,
    });
    Ok(report)
}

/// `pass` iff residual knowledge is at most `threshold` bits.
pub fn interpret(report: &PidReport, threshold: f64) -> Interpretation {
    Interpretation {
        residual_bits: report.i_cap,
        unlearned_bits: report.i_uniq_b,
        threshold,
        verdict: if report.i_cap <= threshold {
            AuditVerdict::Pass
        } else {
            AuditVerdict::Fail
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identities_on_mixed_case() {
        let r = PidReport::from_values(0.63, 0.45, 0.70, 0.41).unwrap();
        assert_abs_diff_eq!(r.i_uniq_b, 0.22, epsilon = 1e-12);
        assert_abs_diff_eq!(r.i_uniq_u, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(r.i_syn, 0.03, epsilon = 1e-12);
    }

    #[test]
    fn zero_and_pure_redundancy() {
        let z = PidReport::from_values(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!((z.i_uniq_b, z.i_uniq_u, z.i_syn, z.i_cap), (0.0, 0.0, 0.0, 0.0));
        let r = PidReport::from_values(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!((r.i_uniq_b, r.i_uniq_u, r.i_syn), (0.0, 0.0, 0.0));
    }

    #[test]
    fn contract_violation() {
        assert!(matches!(
            PidReport::from_values(0.3, 0.5, 0.6, 0.4),
            Err(PidError::UpstreamContract { .. })
        ));
        assert!(matches!(
            PidReport::from_values(f64::NAN, 0.5, 0.6, 0.0),
            Err(PidError::Input { .. })
        ));
    }

    #[test]
    fn negative_synergy_is_clamped_and_kept() {
        let r = PidReport::from_values(0.6, 0.5, 0.5, 0.3).unwrap();
        assert_abs_diff_eq!(r.i_syn_raw, -0.3, epsilon = 1e-12);
        assert_eq!(r.i_syn, 0.0);
    }

    #[test]
    fn verdicts() {
        let at = |i_cap: f64| {
            let r = PidReport::from_values(1.0, 1.0, 1.0, i_cap).unwrap();
            interpret(&r, DEFAULT_PASS_THRESHOLD).verdict
        };
        assert_eq!(at(0.41), AuditVerdict::Fail);
        assert_eq!(at(0.002), AuditVerdict::Pass);
        assert_eq!(at(0.05), AuditVerdict::Pass);
    }

    proptest! {
        #[test]
        fn identities_hold(mi_b in 0.0..1.0f64, mi_u in 0.0..1.0f64, joint in 0.0..1.0f64, frac in 0.0..=1.0f64) {
            let i_cap = frac * mi_b.min(mi_u);
            let r = PidReport::from_values(mi_b, mi_u, joint, i_cap).unwrap();
            prop_assert!((r.i_uniq_b + r.i_cap - mi_b).abs() <= 1e-9);
            prop_assert!((r.i_uniq_u + r.i_cap - mi_u).abs() <= 1e-9);
            prop_assert!((r.i_uniq_b_raw + r.i_uniq_u_raw + r.i_cap + r.i_syn_raw - joint).abs() <= 1e-9);
            prop_assert!(r.i_uniq_b >= 0.0 && r.i_uniq_u >= 0.0 && r.i_syn >= 0.0);
            let v = interpret(&r, 0.05);
            prop_assert_eq!(v.clone(), interpret(&r, 0.05));
        }
    }
}
