use livsic_core::{Error, ErrorFamily};
use thiserror::Error;

/// Exit code of a run whose periodic orbit obstruction does not vanish.
pub const EXIT_OBSTRUCTION_FAILS: i32 = 3;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    ConfigParse(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: Error,
    },
    #[error("report has no series {0:?}")]
    MissingSeries(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    /// One code per error family, so scripts can tell failures apart.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::ConfigParse(_) => 2,
            LabError::Core { source, .. } => match source.family() {
                ErrorFamily::Dynamics => 4,
                ErrorFamily::Orbits => 5,
                ErrorFamily::Groups => 6,
                ErrorFamily::Cocycles => 7,
                ErrorFamily::Solver => 8,
                ErrorFamily::Diffeo => 9,
                ErrorFamily::Conformal => 10,
            },
            LabError::Io { .. } => 11,
            LabError::MissingSeries(_) => 12,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Attaches the pipeline stage to core errors.
pub trait Context<T> {
    fn ctx(self, context: &str) -> Result<T>;
}

impl<T> Context<T> for livsic_core::Result<T> {
    fn ctx(self, context: &str) -> Result<T> {
        self.map_err(|source| LabError::Core {
            context: context.to_string(),
            source,
        })
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io {
        path: path.display().to_string(),
        source,
    }
}
