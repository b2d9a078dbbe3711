use std::fmt;

/// Errors surfaced by the oracle pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller passed arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// The request exceeds what this build computes exactly (dense limits, exhaustive limits).
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("vertex {vertex} has degree {degree}, above slot degree {d}")]
    DegreeOverflow { vertex: usize, degree: usize, d: usize },

    #[error("instance generation failed: {0}")]
    Generation(String),

    /// The k-th eigenvalue of the scaled collision Gram matrix fell below the floor.
    #[error("oracle initialization failed: eigenvalue {index} of scaled Gram is {value:e} (floor {floor:e}); report {eigen_report:?}")]
    InitFailure { index: usize, value: f64, floor: f64, eigen_report: Vec<f64> },

    /// Center Gram matrix could not be inverted; the removed centers are nearly collinear.
    #[error("subspace context singular (pivot {pivot:e} below {floor:e})")]
    ContextFailure { pivot: f64, floor: f64 },

    #[error("candidate center set invalid: {0}")]
    CandidateInvalid(String),

    #[error("center search failed after {} rounds", rounds.len())]
    SearchFailure { rounds: Vec<RoundDiagnostics> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

/// What happened in one FindCenters round.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub sample_size: usize,
    pub partitions_tried: usize,
    pub invalid_candidates: usize,
}

impl fmt::Display for RoundDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "round {}: sample {}, {} partitions tried, {} invalid",
            self.round, self.sample_size, self.partitions_tried, self.invalid_candidates
        )
    }
}
