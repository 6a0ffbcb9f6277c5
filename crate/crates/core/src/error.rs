use thiserror::Error;

/// Errors produced by the imaging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions {width}x{height} must be even for a 2x2 color filter array")]
    OddDimensions { width: usize, height: usize },

    #[error("geometry mismatch: expected {expected:?}, got {actual:?}")]
    GeometryMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("sample buffer holds {actual} values, expected {expected}")]
    BufferLength { expected: usize, actual: usize },

    #[error("image is in color state {actual:?}, operation requires {expected:?}")]
    ColorState {
        expected: crate::image::ColorState,
        actual: crate::image::ColorState,
    },

    #[error("invalid camera profile: {0}")]
    InvalidProfile(String),

    #[error("invalid noise parameters: {0}")]
    InvalidNoiseParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{estimator}: {reason}")]
    Calibration {
        estimator: &'static str,
        reason: String,
    },

    #[error("optimizer diverged at step {step}: objective is {value}")]
    NonFiniteObjective { step: usize, value: f64 },

    #[error("least-squares system is rank deficient: {0}")]
    RankDeficient(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_geometry(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::GeometryMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
