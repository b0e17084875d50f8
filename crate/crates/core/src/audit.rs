//! End-to-end audits: configuration, report schema and the pipelines behind
//! each command.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, split, RepresentationDataset, SplitSpec};
use crate::infotheory::{correlation, fano_bounds, Correlation};
use crate::oracle::{exact_i_wedge, exact_pid_bounds, DiscreteSystem, IntersectionResult, PidBounds};
use crate::pid::{assemble, interpret, AuditVerdict, Interpretation, PidReport, DEFAULT_PASS_THRESHOLD};
use crate::probe::{estimate_joint_mi, estimate_mi, MiEstimate, ProbeFitConfig};
use crate::rine::{fit_rine_with_ceiling, DecoderPair, RedundancyEstimate, RineConfig, StageTrace};
use crate::risk::{abstain, DecisionRecord, Verdict, DEFAULT_TAU};
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub format_version: u32,
    /// Relative paths resolve against the config file's directory.
    pub datasets: Vec<PathBuf>,
    pub split: SplitSpec,
    pub probe: ProbeFitConfig,
    pub rine: RineConfig,
    pub pass_threshold: f64,
    pub tau: f64,
    pub out: Option<PathBuf>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            datasets: Vec::new(),
            split: SplitSpec::default(),
            probe: ProbeFitConfig::default(),
            rine: RineConfig::default(),
            pass_threshold: DEFAULT_PASS_THRESHOLD,
            tau: DEFAULT_TAU,
            out: None,
        }
    }
}

impl AuditConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.datasets {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate().map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Sets every seed (split, probes, RINE) to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        self.probe.seed = seed;
        self.rine.seed = seed;
        self.rine.decoder.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "format_version {} unsupported, expected {REPORT_FORMAT_VERSION}",
                self.format_version
            )));
        }
        self.split.validate()?;
        self.probe.validate()?;
        self.rine.validate()?;
        for (name, v) in [("pass_threshold", self.pass_threshold), ("tau", self.tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// [`RedundancyEstimate`] without the fitted decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancySummary {
    pub h_y_bits: f64,
    pub l_cap_bits: f64,
    pub i_cap_bits_raw: f64,
    pub i_cap_bits: f64,
    pub ceiling_bits: f64,
    pub d_final: f64,
    pub accepted_stage: usize,
    pub accepted_beta: f64,
    pub constraint_met: bool,
    pub trace: Vec<StageTrace>,
}

impl From<&RedundancyEstimate> for RedundancySummary {
    fn from(r: &RedundancyEstimate) -> Self {
        Self {
            h_y_bits: r.h_y_bits,
            l_cap_bits: r.l_cap_bits,
            i_cap_bits_raw: r.i_cap_bits_raw,
            i_cap_bits: r.i_cap_bits,
            ceiling_bits: r.ceiling_bits,
            d_final: r.d_final,
            accepted_stage: r.accepted_stage,
            accepted_beta: r.accepted_beta,
            constraint_met: r.constraint_met,
            trace: r.trace.clone(),
        }
    }
}

/// Fano bounds implied by a probe's test entropy and information, next to
/// its actual test error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoCheck {
    pub weak_bound: f64,
    pub tight_bound: f64,
    pub test_error: f64,
}

impl FanoCheck {
    fn of(est: &MiEstimate) -> Result<Self> {
        let b = fano_bounds(est.h_y_bits, est.mi_bits, 2)?;
        Ok(Self {
            weak_bound: b.weak_bound,
            tight_bound: b.tight_binary_bound.expect("binary target"),
            test_error: est.test_error,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoSummary {
    pub base: FanoCheck,
    pub unlearned: FanoCheck,
    pub joint: FanoCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub path: String,
    pub digest: String,
    pub n: usize,
    pub d_base: usize,
    pub d_unlearned: usize,
    pub split_digest: String,
    pub mi_base: MiEstimate,
    pub mi_unlearned: MiEstimate,
    pub mi_joint: MiEstimate,
    pub redundancy: RedundancySummary,
    pub pid: PidReport,
    pub fano: FanoSummary,
    pub interpretation: Interpretation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub config: AuditConfig,
    /// `fail` if any dataset fails.
    pub verdict: AuditVerdict,
    pub datasets: Vec<DatasetReport>,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: f64,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with `wall_clock_seconds` zeroed.
    pub fn without_wall_clock(&self) -> Self {
        Self {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }
}

fn stage<'a>(name: &'static str, path: &'a Path) -> impl FnOnce(Error) -> Error + 'a {
    move |e| Error::Stage {
        stage: name,
        path: path.display().to_string(),
        source: Box::new(e),
    }
}

pub fn load_dataset(path: &Path) -> Result<RepresentationDataset> {
    dataset::load(path).map_err(|e| stage("load", path)(e.into()))
}

/// Probes, redundancy, decomposition and verdict for one dataset.
pub fn audit_dataset(
    ds: &RepresentationDataset,
    cfg: &AuditConfig,
    path: &Path,
) -> Result<DatasetReport> {
    let sp = split(ds, &cfg.split).map_err(|e| stage("split", path)(e.into()))?;
    let probe = |e: crate::probe::ProbeError| stage("probe", path)(e.into());
    let mi_b = estimate_mi(ds.base(), ds.labels(), &cfg.probe, &sp).map_err(probe)?;
    let mi_u = estimate_mi(ds.unlearned(), ds.labels(), &cfg.probe, &sp).map_err(probe)?;
    let mi_joint = estimate_joint_mi(ds.base(), ds.unlearned(), ds.labels(), &cfg.probe, &sp)
        .map_err(probe)?;
    let red = fit_rine_with_ceiling(ds, &cfg.rine, &sp, mi_b.mi_bits.min(mi_u.mi_bits))
        .map_err(|e| stage("rine", path)(e.into()))?;
    let pid = assemble(&mi_b, &mi_u, &mi_joint, &red).map_err(|e| stage("pid", path)(e.into()))?;
    let fano = FanoSummary {
        base: FanoCheck::of(&mi_b)?,
        unlearned: FanoCheck::of(&mi_u)?,
        joint: FanoCheck::of(&mi_joint)?,
    };
    Ok(DatasetReport {
        path: path.display().to_string(),
        digest: ds.digest(),
        n: ds.n(),
        d_base: ds.d_base(),
        d_unlearned: ds.d_unlearned(),
        split_digest: sp.digest(),
        interpretation: interpret(&pid, cfg.pass_threshold),
        redundancy: RedundancySummary::from(&red),
        mi_base: mi_b,
        mi_unlearned: mi_u,
        mi_joint,
        pid,
        fano,
    })
}

pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    if cfg.datasets.is_empty() {
        return Err(Error::Invalid("config lists no datasets".into()));
    }
    let start = Instant::now();
    let mut datasets = Vec::with_capacity(cfg.datasets.len());
    for path in &cfg.datasets {
        let ds = load_dataset(path)?;
        datasets.push(audit_dataset(&ds, cfg, path)?);
    }
    let verdict = if datasets
        .iter()
        .all(|d| d.interpretation.verdict == AuditVerdict::Pass)
    {
        AuditVerdict::Pass
    } else {
        AuditVerdict::Fail
    };
    Ok(AuditReport {
        format_version: REPORT_FORMAT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        verdict,
        datasets,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Base,
    Unlearned,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub path: String,
    pub side: Side,
    pub n: usize,
    pub auroc: f64,
    pub mi_bits: f64,
    pub test_error: f64,
}

/// One probe per file, evaluated concurrently; rows follow input order.
pub fn probe_sweep(paths: &[PathBuf], cfg: &AuditConfig, side: Side) -> Result<Vec<ProbeRow>> {
    if paths.is_empty() {
        return Err(Error::Invalid("probe sweep needs at least one dataset".into()));
    }
    cfg.split.validate()?;
    cfg.probe.validate()?;
    paths
        .par_iter()
        .map(|path| {
            let ds = load_dataset(path)?;
            let sp = split(&ds, &cfg.split).map_err(|e| stage("split", path)(e.into()))?;
            let est = match side {
                Side::Base => estimate_mi(ds.base(), ds.labels(), &cfg.probe, &sp),
                Side::Unlearned => estimate_mi(ds.unlearned(), ds.labels(), &cfg.probe, &sp),
                Side::Joint => {
                    estimate_joint_mi(ds.base(), ds.unlearned(), ds.labels(), &cfg.probe, &sp)
                }
            }
            .map_err(|e| stage("probe", path)(e.into()))?;
            Ok(ProbeRow {
                path: path.display().to_string(),
                side,
                n: ds.n(),
                auroc: est.auroc,
                mi_bits: est.mi_bits,
                test_error: est.test_error,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderSource {
    /// Separately trained probes.
    Independent,
    /// The agreement-constrained RINE decoders.
    Rine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub n: usize,
    pub answered: usize,
    pub abstained: usize,
    pub tau: f64,
    pub decoders: DecoderSource,
}

/// Trains decoders on the train split and gates every sample of `ds`.
pub fn risk_decisions(
    ds: &RepresentationDataset,
    cfg: &AuditConfig,
    source: DecoderSource,
    path: &Path,
) -> Result<(Vec<DecisionRecord>, RiskSummary)> {
    let sp = split(ds, &cfg.split).map_err(|e| stage("split", path)(e.into()))?;
    let decoders = match source {
        DecoderSource::Independent => DecoderPair::fit_independent(ds, &cfg.probe, &sp),
        DecoderSource::Rine => crate::rine::fit_rine(ds, &cfg.rine, &sp).map(|r| r.decoders),
    }
    .map_err(|e| stage("rine", path)(e.into()))?;
    let mut records = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let (p1, p2) = decoders
            .forget_probs(ds.base_row(i), ds.unlearned_row(i))
            .map_err(|e| stage("rine", path)(e.into()))?;
        let d = abstain(p1, p2, cfg.tau).map_err(|e| stage("risk", path)(e.into()))?;
        records.push(DecisionRecord::new(ds.id_of(i), &d));
    }
    let abstained = records.iter().filter(|r| r.verdict == Verdict::Abstain).count();
    let summary = RiskSummary {
        n: records.len(),
        answered: records.len() - abstained,
        abstained,
        tau: cfg.tau,
        decoders: source,
    };
    Ok((records, summary))
}

/// Newline-delimited JSON, one record per line.
pub fn to_ndjson(records: &[DecisionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Reads `(residual_bits, asr)` pairs from a two-column CSV. A first row
/// that does not parse as numbers is treated as a header.
pub fn read_pairs_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let io = |e: csv::Error| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(io)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Option<Vec<f64>> = record.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => {
                xs.push(v[0]);
                ys.push(v[1]);
            }
            None if row == 0 => continue,
            _ => {
                return Err(Error::Config {
                    path: path.display().to_string(),
                    message: format!("row {} must hold two numbers", row + 1),
                })
            }
        }
    }
    Ok((xs, ys))
}

pub fn correlate_csv(path: &Path) -> Result<Correlation> {
    let (x, y) = read_pairs_csv(path)?;
    correlation(&x, &y).map_err(|e| stage("correlate", path)(e.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub gate: String,
    pub max_q: usize,
    pub bounds: PidBounds,
    pub witness: IntersectionResult,
}

pub fn oracle_table(gate: &str, max_q: usize) -> Result<OracleTable> {
    let sys = DiscreteSystem::by_name(gate)?;
    Ok(OracleTable {
        gate: gate.to_ascii_lowercase(),
        max_q,
        bounds: exact_pid_bounds(&sys, max_q)?,
        witness: exact_i_wedge(&sys, max_q)?,
    })
}

impl OracleTable {
    pub fn render(&self) -> String {
        let b = &self.bounds;
        let mut s = String::new();
        let _ = writeln!(s, "gate {} (max_q {})", self.gate, self.max_q);
        for (name, v) in [
            ("I(Y;X1)", b.i1),
            ("I(Y;X2)", b.i2),
            ("I(Y;X1,X2)", b.i12),
            ("i_wedge", b.i_wedge),
            ("uniq1", b.uniq1),
            ("uniq2", b.uniq2),
            ("syn", b.syn),
        ] {
            let _ = writeln!(s, "  {name:<11} {v:.6}");
        }
        let _ = writeln!(s, "  witness f1={:?} f2={:?}", self.witness.f1, self.witness.f2);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_hash() {
        let cfg = AuditConfig::default().with_seed(7);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: AuditConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.hash(), AuditConfig::default().hash());
        let partial: AuditConfig = serde_json::from_str(r#"{"tau": 0.3}"#).unwrap();
        assert_eq!(partial.tau, 0.3);
        assert!(serde_json::from_str::<AuditConfig>(r#"{"taus": 0.3}"#).is_err());
    }

    #[test]
    fn oracle_render() {
        let t = oracle_table("XOR", 4).unwrap();
        assert!(t.render().contains("syn         1.000000"));
    }
}
