use alloc::string::String;

/// Errors raised by the diagnostics core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("graph has no triples")]
    EmptyGraph,
    #[error("inequality index undefined: {0}")]
    UndefinedIndex(&'static str),
    #[error("graph density undefined for {entities} entities")]
    UndefinedDensity { entities: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("sample {sample_index}: connected component too small (needed {needed}, reached {achieved})")]
    UndersizedComponent {
        sample_index: u64,
        needed: usize,
        achieved: usize,
    },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("empty evaluation: no ranks")]
    EmptyEvaluation,
    #[error("embedding quality denominator is zero for entity {entity}")]
    DegenerateDenominator { entity: u32 },
    #[error("stratum too small for n = {needed}: |L| = {low}, |H| = {high}")]
    InsufficientStratum {
        needed: usize,
        low: usize,
        high: usize,
    },
    #[error("the two graphs share no entities")]
    NoCommonEntities,
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("surrogate fit failed: {0}")]
    FitFailed(String),
    #[error("Sobol indices undefined: total output variance is zero")]
    UndefinedIndices,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
