use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("right-hand side has mean {mean:e} (norm {norm:e}); a zero-mean source is required")]
    NonzeroMean { mean: f64, norm: f64 },
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNonConvergence { iterations: usize, residual: f64 },
    #[error("inner iteration is not contracting: observed ratio {observed:.4} against theoretical bound {bound:.4}")]
    ContractionFailure { observed: f64, bound: f64 },
    #[error("{what} did not converge within {iterations} iterations (last step {last:e})")]
    IterationCap { what: &'static str, iterations: usize, last: f64 },
    #[error("outer iteration diverged at eps={eps:e} after {halvings} damping halvings")]
    Divergence { eps: f64, halvings: usize },
    #[error("line search failed: {0}")]
    LineSearch(String),
    #[error("field format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
