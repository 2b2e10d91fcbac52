use std::fmt;

use rphedge::error::SolveError;
use serde::Serialize;
use thiserror::Error;

/// Machine-readable failure class, reported on stderr and as exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// Malformed input file or flag.
    Parse,
    Infeasible,
    /// A proximal subproblem did not converge.
    ProxFailure,
    WorkerFailure,
    /// I/O and other runtime failures.
    Runtime,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Parse => 2,
            Self::Infeasible => 3,
            Self::ProxFailure => 4,
            Self::WorkerFailure | Self::Runtime => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Parse => "parse",
            Self::Infeasible => "infeasible",
            Self::ProxFailure => "prox-failure",
            Self::WorkerFailure => "worker-failure",
            Self::Runtime => "runtime",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, Serialize)]
#[error("{category}: {message}")]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(Category::Parse, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::new(Category::Runtime, message)
    }

    /// One JSON line for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "category": self.category, "message": self.message } }).to_string()
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        let category = match &e {
            SolveError::Structure(_) | SolveError::Config(_) => Category::Parse,
            SolveError::Infeasible { .. } => Category::Infeasible,
            SolveError::Prox { .. } => Category::ProxFailure,
            SolveError::Worker { .. } => Category::WorkerFailure,
            SolveError::Runtime(_) => Category::Runtime,
        };
        Self::new(category, e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_errors_map_to_exit_codes() {
        let cases = [
            (SolveError::Config("x".into()), 2, "parse"),
            (SolveError::Infeasible { scenario: 1 }, 3, "infeasible"),
            (SolveError::Prox { scenario: 0, reason: "stalled".into() }, 4, "prox-failure"),
            (SolveError::Worker { worker: 2, scenario: 0, reason: "lost".into() }, 5, "worker-failure"),
            (SolveError::Runtime("x".into()), 5, "runtime"),
        ];
        for (err, code, name) in cases {
            let cli = CliError::from(err);
            assert_eq!(cli.category.exit_code(), code);
            let line: serde_json::Value = serde_json::from_str(&cli.to_json()).unwrap();
            assert_eq!(line["error"]["category"], name);
        }
    }
}
