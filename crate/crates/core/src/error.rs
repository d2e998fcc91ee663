use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the core library reports.
///
/// The variants follow the failure classes callers need to tell apart: the
/// CLI maps `Format` to its own exit code and everything shape-related to
/// another.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("block out of bounds: {0}")]
    Bounds(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
