use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix has column rank {rank} but {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("Lewis weight iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("sampling rate {0} is outside (0, 1]")]
    InvalidRate(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("first-stage sample lost column rank in {attempts} attempts")]
    DegenerateStage { attempts: usize },

    #[error("calibration failed: constant exceeded {limit} with pass rate {best_pass_rate}")]
    CalibrationFailed { limit: f64, best_pass_rate: f64 },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
