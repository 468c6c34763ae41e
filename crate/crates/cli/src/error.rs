use std::path::Path;

use steepfit::certify::CertifyError;
use steepfit::data::DataError;
use steepfit::descent::DescentError;
use steepfit::expr::ExprError;
use steepfit::integrate::IntegrateError;
use steepfit::objective::ObjectiveError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    /// Input that parsed but is unusable (bad model, bad CSV contents, ...).
    #[error("{origin}: {message}")]
    Validation { origin: &'static str, message: String },
    /// A computation produced or hit a non-finite value.
    #[error("{origin}: {message}")]
    Numeric { origin: &'static str, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation { .. } => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    fn validation(origin: &'static str, e: impl ToString) -> CliError {
        CliError::Validation {
            origin,
            message: e.to_string(),
        }
    }

    fn numeric(origin: &'static str, e: impl ToString) -> CliError {
        CliError::Numeric {
            origin,
            message: e.to_string(),
        }
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        CliError::validation("expr", e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::validation("data", e),
        }
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        CliError::validation("objective", e)
    }
}

impl From<DescentError> for CliError {
    fn from(e: DescentError) -> Self {
        match e {
            DescentError::NonFiniteStart { .. } => CliError::numeric("descent", e),
            _ => CliError::validation("descent", e),
        }
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::NonFinite { .. } => CliError::numeric("integrate", e),
            _ => CliError::validation("integrate", e),
        }
    }
}

impl From<CertifyError> for CliError {
    fn from(e: CertifyError) -> Self {
        match e {
            CertifyError::NonFiniteJacobian { .. } | CertifyError::Unusable { .. } | CertifyError::NonFiniteBound(_) => {
                CliError::numeric("certify", e)
            }
            CertifyError::Expr(inner) => inner.into(),
            CertifyError::Data(inner) => inner.into(),
            CertifyError::Objective(inner) => inner.into(),
            CertifyError::Descent(inner) => inner.into(),
            _ => CliError::validation("certify", e),
        }
    }
}
