use std::path::PathBuf;

use qoe_core::dataset::Kqi;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qoe_core::Error),
    #[error("no trained {model} model for {}: expected {}", kqi.name(), path.display())]
    MissingModel {
        model: &'static str,
        kqi: Kqi,
        path: PathBuf,
    },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::MissingModel { .. } => "missing_model",
        }
    }

    /// 2 configuration, 3 I/O, 4 file format, 5 data, 6 numerical,
    /// 7 missing model.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => core_code(e),
            CliError::MissingModel { .. } => 7,
        }
    }
}

fn core_code(e: &qoe_core::Error) -> i32 {
    use qoe_core::Error::*;
    match e {
        Config(_) => 2,
        Io { .. } => 3,
        Csv(_) | Json(_) | Format(_) => 4,
        Diverged { .. } | NumericalRank | TooLarge(_) | Domain(_) => 6,
        TimedRun { source, .. } => core_code(source),
        _ => 5,
    }
}

pub type CliResult<T> = Result<T, CliError>;
