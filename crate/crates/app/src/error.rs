use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    /// Process exit code: 2 configuration, 3 data, 4 runtime or NaN abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Runtime(_) => 4,
        }
    }
}

impl From<codesep_core::Error> for Error {
    fn from(e: codesep_core::Error) -> Self {
        use codesep_core::Error as E;
        match e {
            E::InvalidArgument(_) => Error::Config(e.to_string()),
            E::Parse { .. } | E::Manifest(_) | E::Io(_) | E::Wav(_) | E::Json(_) => Error::Data(e.to_string()),
        }
    }
}

impl From<codesep_nn::Error> for Error {
    fn from(e: codesep_nn::Error) -> Self {
        use codesep_nn::Error as E;
        match e {
            E::Core(inner) => inner.into(),
            E::Config(_) | E::InvalidArgument(_) | E::Checkpoint(_) => Error::Config(e.to_string()),
            E::Io(_) | E::Json(_) => Error::Data(e.to_string()),
            E::NonFinite { .. } | E::Tensor(_) => Error::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
