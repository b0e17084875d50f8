//! Auditing residual membership information in model representations.
//!
//! A dataset pairs base-model representations `B` with unlearned-model
//! representations `U` and forget-set labels `Y`. Linear probes estimate
//! `I(Y;B)`, `I(Y;U)` and `I(Y;B,U)`; [`rine`] estimates the redundancy
//! shared by both sides; [`pid`] splits the joint information into unlearned,
//! residual, unlearned-side-unique and synergistic parts.

pub mod audit;
pub mod dataset;
pub mod infotheory;
pub mod oracle;
pub mod pid;
pub mod probe;
pub mod rine;
pub mod risk;
pub mod synth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset: {0}")]
    Dataset(#[from] dataset::DatasetError),

    #[error("infotheory: {0}")]
    Info(#[from] infotheory::InfoError),

    #[error("probe: {0}")]
    Probe(#[from] probe::ProbeError),

    #[error("rine: {0}")]
    Rine(#[from] rine::RineError),

    #[error("pid: {0}")]
    Pid(#[from] pid::PidError),

    #[error("oracle: {0}")]
    Oracle(#[from] oracle::OracleError),

    #[error("synth: {0}")]
    Synth(#[from] synth::SynthError),

    #[error("risk: {0}")]
    Risk(#[from] risk::RiskError),

    #[error("{stage} stage failed on {path}: {source}")]
    Stage {
        stage: &'static str,
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
