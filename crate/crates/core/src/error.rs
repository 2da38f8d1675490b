use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected}, got {actual} ({what})")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh parse error at {location}: {message}")]
    MeshParse { location: String, message: String },

    #[error("displacement tangles the mesh (min jacobian ratio {ratio:.3e} <= {threshold:.1e})")]
    Tangled { ratio: f64, threshold: f64 },

    #[error("matrix is numerically singular at pivot step {step} (column {column})")]
    SingularMatrix { step: usize, column: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    EigenNoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("newton did not converge within {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("deflation singularity: iterate coincides with deflated solution {index}")]
    DeflationSingularity { index: usize },

    #[error("all {0} Moore-Spence candidate solves failed")]
    AllCandidatesFailed(usize),

    #[error("no free degrees of freedom")]
    EmptyFreeSet,

    #[error("optimizer step length fell below {floor:.1e} without an accepted step")]
    StepFloor { floor: f64 },

    #[error("optimizer reached the iteration cap ({0})")]
    IterationCap(usize),

    #[error("shape gradient failed the Taylor test (observed rate {rate:.3})")]
    GradientCheck { rate: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::SizeMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}
