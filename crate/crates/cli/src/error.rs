use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Problem in an experiment file, located to a line.
    #[error("{origin}:{line}: {message}")]
    Spec { origin: String, line: usize, message: String },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] recon_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{failed} evaluation(s) failed; outputs in {} are partial", out_dir.display())]
    Partial { failed: usize, out_dir: PathBuf },

    #[error("comparison failed on {} row(s): {}", rows.len(), join(rows))]
    Mismatch { rows: Vec<usize> },
}

fn join(rows: &[usize]) -> String {
    rows.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for a failed acceptance comparison, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Mismatch { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
