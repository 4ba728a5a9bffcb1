use std::fmt;

use serde::Serialize;

/// Failure reported on stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { error: kind.to_string(), message: message.into(), context: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("Usage", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.context {
            Some(c) => write!(f, "{}: {} ({c})", self.error, self.message),
            None => write!(f, "{}: {}", self.error, self.message),
        }
    }
}

impl From<motionseg::Error> for CliError {
    fn from(e: motionseg::Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| {
            let mut err: CliError = e.into();
            let extra = ctx();
            err.context = Some(match err.context.take() {
                Some(inner) => format!("{extra}: {inner}"),
                None => extra,
            });
            err
        })
    }
}
