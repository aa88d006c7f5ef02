use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes or channel counts do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An input lies outside the domain of the operation (e.g. a nonpositive sigma).
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke an API contract (non-scalar loss, mismatched group tags, ...).
    #[error("contract error: {0}")]
    Contract(String),
    /// An input that the operation cannot handle geometrically, such as lifting the origin.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// A numerical procedure failed (Cholesky breakdown, non-finite loss, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A serialized file did not match the expected layout.
    #[error("format error: {0}")]
    Format(String),
    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(format!($($arg)*))
    };
}
pub(crate) use dim_err;
