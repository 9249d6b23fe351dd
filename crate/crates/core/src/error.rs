use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    Covariance { min_eigenvalue: f64 },

    #[error("degenerate multipliers: {0}")]
    DegenerateMultiplier(String),

    #[error("degenerate bound constant c = {0:e}")]
    DegenerateConstant(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("solver failure in {strategy}: {message}")]
    Solver { strategy: String, message: String },

    #[error("{strategy}: {source}")]
    Strategy {
        strategy: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Process exit code for the command-line tool: 1 config, 2 data, 3 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Json(_) => 1,
            Error::Parse { .. } | Error::InsufficientData(_) | Error::Io(_) | Error::Csv(_) => 2,
            Error::Covariance { .. }
            | Error::DegenerateMultiplier(_)
            | Error::DegenerateConstant(_)
            | Error::InvalidState(_)
            | Error::Solver { .. } => 3,
            Error::Strategy { source, .. } => source.exit_code(),
        }
    }
}
