use thiserror::Error;

/// Errors raised by model construction and by the verification engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid weights: {0}")]
    BadWeights(String),

    #[error("invalid partition: {0}")]
    BadPartition(String),

    #[error("filtration does not refine: {0}")]
    NonRefiningFiltration(String),

    #[error("process is not adapted: {0}")]
    NotAdapted(String),

    #[error("process is not predictable: {0}")]
    NotPredictable(String),

    #[error("process is not increasing: {0}")]
    NotIncreasing(String),

    #[error("process is not a martingale (max violation {max_violation:e})")]
    NotAMartingale { max_violation: f64 },

    #[error("predictable function undefined at t={t}, atom={atom}, mark={mark:?}")]
    MissingMark { t: usize, atom: usize, mark: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("representation mismatch: {0}")]
    RepresentationMismatch(String),

    #[error("factor {index} lacks the weak representation property ({mart_dim} vs {repr_dim})")]
    FactorLacksWrp {
        index: usize,
        mart_dim: usize,
        repr_dim: usize,
    },

    #[error("factor horizons differ: {0}")]
    HorizonMismatch(String),

    #[error("equivalence hypothesis fails: {0}")]
    EquivalenceFails(String),

    #[error("joint law inconsistent with base weights: {0}")]
    MarginalMismatch(String),

    #[error("initial sigma-field must be trivial: {0}")]
    NontrivialF0(String),

    #[error("base process lacks the weak representation property ({mart_dim} vs {repr_dim})")]
    BaseLacksWrp { mart_dim: usize, repr_dim: usize },

    #[error("invalid grid: {0}")]
    BadGrid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
