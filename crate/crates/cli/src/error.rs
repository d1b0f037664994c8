use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hjm_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    /// 2 for anything the user can fix in the configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use hjm_core::Error as E;
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Csv(_) => 2,
            Self::Core(e) => match e {
                E::NonCommensurateGrid { .. }
                | E::StepOrderViolation { .. }
                | E::OutOfRange { .. }
                | E::InvalidParameter(_)
                | E::InsufficientPaths(_) => 2,
                E::StencilOutOfRange { .. } | E::MissingFictitiousNode { .. } | E::Numerical(_) => {
                    3
                }
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
