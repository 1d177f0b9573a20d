use std::path::PathBuf;

use thiserror::Error;

use crate::pf_solver::OfflineRun;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The rate vector uses the whole channel (or more): `wᵀx ≥ 1`.
    #[error("infeasible rate vector: airtime wᵀx = {airtime} (must be < 1)")]
    Infeasible { airtime: f64 },

    #[error("mean delay undefined for station {station}: zero send rate")]
    UndefinedDelay { station: usize },

    #[error("no VHT 80 MHz rate for MCS {mcs} with {nss} spatial stream(s)")]
    UnknownRate { mcs: u8, nss: u8 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected} stations, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solution violates {constraint} (excess {excess:e})")]
    FeasibilityViolation { constraint: String, excess: f64 },

    #[error("oracle supports at most {max} stations, got {n}")]
    UnsupportedSize { n: usize, max: usize },

    #[error("offline iteration did not converge within {slots} slots")]
    NonConvergence { slots: usize, run: Box<OfflineRun> },

    #[error("unknown station index {station} (n = {n})")]
    UnknownStation { station: usize, n: usize },

    #[error("{}: parse error at line {line}, column {column}, field `{field}`: {message}", source_name.display())]
    Parse { source_name: PathBuf, line: usize, column: usize, field: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("sweep value {value}: {source}")]
    Sweep {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
