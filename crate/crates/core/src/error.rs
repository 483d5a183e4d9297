use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("entry count {found} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, found: usize },

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty operator list")]
    Empty,

    #[error("completeness violated: max |sum M^dag M - I| = {deviation:e} exceeds {tolerance:e}")]
    Incomplete { deviation: f64, tolerance: f64 },

    #[error("element {index} has a negative effect eigenvalue {min_eigenvalue:e}")]
    NotPsd { index: usize, min_eigenvalue: f64 },

    #[error("outcome {outcome} has probability {probability:e}; cannot condition on it")]
    UnconditionableOutcome { outcome: usize, probability: f64 },

    #[error("probability {value:e} for outcome {outcome} is negative beyond rounding")]
    NegativeProbability { outcome: usize, value: f64 },

    #[error("state norm {norm} differs from 1")]
    NotNormalized { norm: f64 },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("circuit width {circuit} does not match state width {state}")]
    WidthMismatch { circuit: usize, state: usize },

    #[error("qubit {qubit} is out of range for a {width}-qubit register")]
    QubitOutOfRange { qubit: usize, width: usize },

    #[error("invalid outcome bitstring {0:?}")]
    BadBitstring(String),

    #[error("readout error rate {rate} on qubit {qubit} makes the confusion matrix singular")]
    SingularConfusion { qubit: usize, rate: f64 },

    #[error("invalid readout error rate {rate} on qubit {qubit}")]
    BadErrorRate { qubit: usize, rate: f64 },

    #[error("confusion model covers {available} qubits, {required} required")]
    ModelTooSmall { available: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Qasm(#[from] crate::qasm::QasmError),
}
