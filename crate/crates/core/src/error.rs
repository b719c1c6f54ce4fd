use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty field")]
    EmptyField,
    #[error("singular gradient: query point coincides with keypoint {0}")]
    SingularGradient(usize),
    #[error("unlabeled keypoints")]
    Unlabeled,
    #[error("packing failed: could not place {k} points {min_separation} apart after {attempts} attempts")]
    PackingFailed {
        k: usize,
        min_separation: f64,
        attempts: usize,
    },
    #[error("degenerate point set: {0}")]
    DegeneratePointSet(String),
    #[error("no valid centers")]
    NoValidCenters,
    #[error("empty point set")]
    EmptyPointSet,
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (divergence, degenerate extraction)
    /// rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TrainingDiverged { .. }
                | Error::DegeneratePointSet(_)
                | Error::NoValidCenters
                | Error::SingularGradient(_)
        )
    }
}
