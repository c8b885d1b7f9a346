use thiserror::Error;

pub type Result<T> = std::result::Result<T, QamError>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum QamError {
    #[error("register needs {requested} qubits, simulator cap is {cap}")]
    Capacity { requested: usize, cap: usize },

    #[error("gate is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    InvalidQubit { index: usize, num_qubits: usize },

    #[error("control and target qubits overlap at qubit {0}")]
    OverlappingQubits(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("cannot project onto an outcome with zero probability")]
    ZeroProbabilityOutcome,

    #[error("invalid register layout: {0}")]
    Layout(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("duplicate pattern {pattern} at position {index}")]
    DuplicatePattern { index: usize, pattern: String },

    #[error("pattern width {found} does not match expected width {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("memory must hold at least one pattern")]
    EmptyModel,

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("every stored pattern is at maximal distance; the output distribution is undefined")]
    DegenerateDistribution,

    #[error("{candidates} stored patterns share the minimal distance {distance}")]
    AmbiguousMinimum { distance: usize, candidates: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible tuning target: {0}")]
    Infeasible(String),

    #[error("scan grid does not bracket the transition: {0}")]
    Bracket(String),

    #[error("spin values must be +1/2 or -1/2, got {0}")]
    InvalidSpin(f64),
}
