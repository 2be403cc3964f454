use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("landmark {index} is at or behind the camera plane (z = {z})")]
    BehindCamera { index: usize, z: f64 },
    #[error("expression coefficient {index} = {value} is outside [0, 1]")]
    CoefficientOutOfRange { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("lower bound exceeds upper bound at index {index}")]
    BoundInversion { index: usize },
    #[error("degenerate triangulation: {0}")]
    DegenerateTriangulation(&'static str),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("network has not been trained")]
    Untrained,
    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                actual,
            })
        }
    }
}
