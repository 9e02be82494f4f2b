use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// NV on or outside the spin shell; the dipolar sum diverges.
    #[error("nv offset {nv_offset} nm must lie strictly inside shell of radius {shell_radius} nm")]
    Geometry { nv_offset: f64, shell_radius: f64 },

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("rejection sampling of `{parameter}` exceeded {attempts} attempts (pathological ensemble spec)")]
    Pathological { parameter: &'static str, attempts: u32 },

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status class: 2 for usage/config problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. } | Error::Parse { .. } | Error::Usage(_) => 2,
            _ => 3,
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry { .. } => "geometry",
            Error::Invalid { .. } => "validation",
            Error::Pathological { .. } => "sampling",
            Error::Parse { .. } => "parse",
            Error::Usage(_) => "usage",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
        }
    }
}
