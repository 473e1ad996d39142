use std::fmt;
use std::path::Path;

use serde::Serialize;

/// A command failure with its process exit code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "config", message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 3, kind: "input", message: message.into() }
    }

    /// A stage ran before the artifact it consumes exists or is current.
    pub fn stage(message: impl Into<String>) -> Self {
        Self { code: 4, kind: "stage-order", message: message.into() }
    }

    pub fn missing_artifact(path: &Path, producer: &str) -> Self {
        Self::stage(format!("missing artifact {} (run `{producer}` first)", path.display()))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: 1, kind: "internal", message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for Failure {}

/// Tags any displayable error as an input failure.
pub fn input<E: fmt::Display>(context: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::input(format!("{context}: {e}"))
}
