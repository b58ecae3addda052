use fresnel_loc::fresnel::GeometryError;
use fresnel_loc::io::FormatError;
use fresnel_loc::locate::LocateError;
use fresnel_loc::phase::PipelineError;
use fresnel_loc::pipeline::LocalizeError;
use fresnel_loc::sim::SimError;
use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LocateError> for CliError {
    fn from(e: LocateError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Window(_) => CliError::Config(e.to_string()),
            PipelineError::OutOfRange { .. } | PipelineError::LengthMismatch(..) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LocalizeError> for CliError {
    fn from(e: LocalizeError) -> Self {
        match e {
            LocalizeError::TooFewLinks(_) => CliError::Config(e.to_string()),
            LocalizeError::Misaligned(_) | LocalizeError::CalibrationMismatch => CliError::Data(e.to_string()),
            LocalizeError::Pipeline(p) => p.into(),
        }
    }
}
