use thiserror::Error;

use crate::noise::MlEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix has eigenvalue {0:.3e} below the allowed floor")]
    NegativeEigenvalue(f64),

    #[error("map is not completely positive; Choi eigenvalues {eigenvalues:?}")]
    NotCompletelyPositive { eigenvalues: Vec<f64> },

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("state vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("input state is not faithful: {0}")]
    NotFaithful(String),

    #[error("preparation failed for target `{target}`: success probability {probability:.3e}")]
    PreparationFailed { target: String, probability: f64 },

    #[error("basis is rank deficient: rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("missing count record for input `{input}`, measurement `{measurement}`")]
    MissingCount { input: String, measurement: String },

    #[error("expected count {value:.3e} is too negative for a physical process")]
    UnphysicalExpectation { value: f64 },

    #[error("optimizer did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, best: Box<MlEstimate> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
