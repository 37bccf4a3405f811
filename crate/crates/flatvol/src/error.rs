use std::path::PathBuf;

/// Everything that can stop a command. Messages start with the module that
/// failed.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] flatvol_core::Error),
    #[error("cli_app: cannot parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },
    #[error("cli_app: invalid config: {0}")]
    Config(String),
    #[error("market_data: {path}, record {record}: {message}")]
    Format {
        path: PathBuf,
        record: u64,
        message: String,
    },
    #[error("market_data: {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cli_app: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cli_app: json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cli_app: input {path} changed since the manifest was written (sha256 {expected} recorded, {actual} found)")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("performance_metrics: benchmark alignment: {0}")]
    Alignment(String),
}

macro_rules! via_core {
    ($($ty:path),* $(,)?) => {
        $(impl From<$ty> for AppError {
            fn from(e: $ty) -> Self {
                AppError::Core(e.into())
            }
        })*
    };
}

via_core!(
    flatvol_core::filter::FilterError,
    flatvol_core::state_space::StateSpaceError,
    flatvol_core::vol::VolError,
    flatvol_core::factors::FactorError,
    flatvol_core::market::MarketError,
    flatvol_core::synth::SynthError,
    flatvol_core::backtest::BacktestError,
    flatvol_core::metrics::MetricsError,
);

impl AppError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        AppError::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
