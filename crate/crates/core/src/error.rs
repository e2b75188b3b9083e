use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vectorize expects a square matrix, got {rows}x{cols}")]
    NonSquareInput { rows: usize, cols: usize },
    #[error("dimension {0} is too small (need at least 2)")]
    DimensionTooSmall(usize),
    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("register `{0}` already exists")]
    DuplicateLabel(String),
    #[error("register `{0}` does not exist")]
    UnknownLabel(String),
    #[error("not a valid density operator: {0}")]
    InvalidDensity(String),
    #[error("operator is not an isometry (deviation {0:.3e})")]
    NonIsometricOperator(f64),
    #[error("state lies outside the support of the partial isometry (trace loss {0:.3e})")]
    SupportMismatch(f64),
    #[error("bell measurement on registers of unequal dimension {0} and {1}")]
    UnequalDims(usize, usize),
    #[error("Kraus operators are not complete (deviation {0:.3e})")]
    IncompleteInstrument(f64),
    #[error("partial trace needs at least one register to keep")]
    EmptyKeepSet,
    #[error("registers are not in the product form needed for an ideal merge: {0}")]
    NotMergeableState(String),

    #[error("input vector has non-real entries")]
    NonRealInput,
    #[error("input vector is not normalised (norm {0})")]
    NonUnitNorm(f64),
    #[error("matrix is not Hermitian")]
    NonHermitian,
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NonPsd(f64),

    #[error("entanglement can only be shared before the first query")]
    AfterStart,
    #[error("servers attempted to communicate directly")]
    ServerCollusionAttempt,
    #[error("{party} does not own register `{label}`")]
    NotOwner { party: String, label: String },
    #[error("{party} may not touch register `{label}`")]
    AccessDenied { party: String, label: String },
    #[error("a party cannot send to itself")]
    SelfSend,

    #[error("message payloads do not pairwise commute (pair {0}, {1})")]
    NonCommutingPayload(usize, usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("protocol {0} is not supported by this checker")]
    UnsupportedProtocol(u8),
    #[error("message database does not fit protocol: {0}")]
    WrongMessageKind(String),

    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("invariant violated for message {index}: {reason}")]
    InvariantViolation { index: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
