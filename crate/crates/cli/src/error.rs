use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qfm::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: qfm::Error,
    },
    #[error("{0}")]
    Parameter(String),
    #[error("config file {path}: {source}")]
    Config {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn param(msg: impl Into<String>) -> Self {
        CliError::Parameter(msg.into())
    }

    /// Attaches the file being read to a library error.
    pub fn file(path: &std::path::Path) -> impl FnOnce(qfm::Error) -> CliError + '_ {
        move |source| CliError::File {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable machine-readable category, printed as `error[category]`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) | CliError::File { source: e, .. } => e.category(),
            CliError::Parameter(_) => "parameter",
            CliError::Config { .. } => "json",
            CliError::Csv(_) | CliError::Io(_) => "io",
        }
    }

    /// Process exit code for the category. Usage errors caught by the argument
    /// parser exit with 2 before reaching here.
    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "parameter" => 3,
            "shape" => 4,
            "divergence" => 5,
            "format" => 6,
            "io" => 7,
            "json" => 8,
            _ => 1,
        }
    }
}
