//! Error classification and exit codes.

use momentfit::Error;
use serde::Serialize;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_MISSING_DATA: i32 = 3;
pub const EXIT_MISSING_TABLE: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;
pub const EXIT_IO: i32 = 6;

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(rename = "exit_code")]
    pub code: i32,
}

impl CliError {
    fn new(kind: &'static str, code: i32, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            code,
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new("schema", EXIT_SCHEMA, message)
    }

    pub fn missing_data(message: impl Into<String>) -> Self {
        Self::new("missing_data", EXIT_MISSING_DATA, message)
    }

    pub fn missing_table(message: impl Into<String>) -> Self {
        Self::new("missing_copula_table", EXIT_MISSING_TABLE, message)
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        Self::new("io", EXIT_IO, format!("{context}: {e}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidSpec { .. } | Error::Config(_) | Error::Json(_) | Error::TooManyOutputs(_) => {
                Self::new("schema", EXIT_SCHEMA, message)
            }
            Error::MissingCopulaTable | Error::TableFormat(_) => Self::new("missing_copula_table", EXIT_MISSING_TABLE, message),
            Error::Data(_) => Self::new("data", EXIT_MISSING_DATA, message),
            Error::NonFinite { .. }
            | Error::Domain(_)
            | Error::Integration { .. }
            | Error::DegenerateOutput { .. }
            | Error::Conditioning(_)
            | Error::Optimization(_)
            | Error::Sample { .. }
            | Error::TableBuild(_) => Self::new("numerical", EXIT_NUMERICAL, message),
            Error::Io(_) => Self::new("io", EXIT_IO, message),
            _ => Self::new("internal", EXIT_OTHER, message),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("io", EXIT_IO, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("internal", EXIT_OTHER, e.to_string())
    }
}
