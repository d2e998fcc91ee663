use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] mrc_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("json output: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 ok, 2 usage or shape, 3 format, 4 internal.
    pub fn exit_code(&self) -> i32 {
        use mrc_core::Error as E;
        match self {
            Error::Core(E::Format(_)) => 3,
            Error::Core(E::State(_)) => 4,
            Error::Core(_) | Error::Io { .. } | Error::Usage(_) => 2,
            Error::Json(_) | Error::Pool(_) => 4,
        }
    }
}

macro_rules! usage {
    ($($arg:tt)*) => {
        return Err($crate::error::Error::Usage(format!($($arg)*)))
    };
}
pub(crate) use usage;
