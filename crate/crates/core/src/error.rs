use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate vertex label `{0}`")]
    DuplicateLabel(String),
    #[error("self-loop on vertex `{0}`")]
    SelfLoop(String),
    #[error("edge ({src}, {dst}) has non-positive or non-finite weight {weight}")]
    InvalidWeight {
        src: String,
        dst: String,
        weight: f64,
    },
    #[error("edge endpoint `{0}` is not a known vertex")]
    UnknownVertex(String),
    #[error("edge ({0}, {1}) listed more than once")]
    DuplicateEdge(String, String),
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("vertex `{0}` has zero degree; normalized Laplacians are undefined")]
    ZeroDegree(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix dimensions do not match: {0}")]
    DimensionMismatch(String),
    #[error("matrix function is not finite at eigenvalue {0:e}")]
    NonFiniteFunction(f64),
    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("Lyapunov equation is singular (eigenvalue pair sums to ~0)")]
    SingularLyapunov,
    #[error("matrix is singular")]
    Singular,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative time {0} for a process started at t = 0")]
    NegativeTime(f64),
    #[error("vertex index {index} out of range for a graph with {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("kernel `{kernel}` is not supported here: {reason}")]
    Unsupported { kernel: String, reason: String },

    #[error("stability guard violated: {0}")]
    Stability(String),
    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical linear algebra rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularLyapunov
                | Error::Singular
                | Error::NonFiniteFunction(_)
                | Error::Optimization(_)
                | Error::Stability(_)
        )
    }
}
