use thiserror::Error;

/// Errors reported by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or state contained NaN or infinite entries.
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix expected to be unitary is not, within tolerance.
    #[error("matrix is not unitary: deviation {deviation:.3e} exceeds {tolerance:.3e}")]
    NotUnitary { deviation: f64, tolerance: f64 },

    /// A stated hypothesis does not hold on the given inputs.
    #[error("precondition violated ({context}): residual {residual:.3e}")]
    PreconditionViolated { context: &'static str, residual: f64 },

    /// Requested qubit or node does not exist.
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: usize },

    /// Measurement targets, gate targets or register names are invalid.
    #[error("invalid target: {0}")]
    InvalidTarget(String),

    /// A branch with (numerically) zero probability was forced.
    #[error("forced branch has probability {prob:.3e} < 1e-12")]
    ZeroProbabilityBranch { prob: f64 },

    /// A node was measured twice, or out of time order.
    #[error("measurement order violation: {0}")]
    MeasurementOrder(String),

    /// Register would exceed the supported qubit count.
    #[error("register of {requested} qubits exceeds the {limit}-qubit limit")]
    RegisterTooLarge { requested: usize, limit: usize },

    /// A parameter is outside its documented range.
    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    /// Input circuit contains a gate not allowed at this stage.
    #[error("unsupported gate: {0}")]
    UnsupportedGate(String),

    /// Graph is malformed (dangling edge, self loop, duplicate id, ...).
    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    /// Configuration file or CLI input failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
