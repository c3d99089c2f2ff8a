use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by scene construction, queries and analyses.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },

    #[error("{kind} `{id}` already exists")]
    Conflict { kind: &'static str, id: String },

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("community `{0}` has zero population")]
    EmptyPopulation(String),

    #[error("inconsistent record `{id}`: {detail}")]
    InconsistentRecord { id: String, detail: String },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("{0}")]
    Validation(ValidationReport),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code, used by the HTTP problem documents.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "invalid-geometry",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NotFound { .. } => "not-found",
            Error::Conflict { .. } => "conflict",
            Error::OutOfBounds(_) => "out-of-bounds",
            Error::InsufficientData(_) => "insufficient-data",
            Error::EmptyPopulation(_) => "empty-population",
            Error::InconsistentRecord { .. } => "inconsistent-record",
            Error::Syntax { .. } => "syntax",
            Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { kind, id: id.into() }
    }

    pub(crate) fn conflict(kind: &'static str, id: impl Into<String>) -> Self {
        Error::Conflict { kind, id: id.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// One broken invariant, naming the offending object and the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub object: String,
    pub rule: String,
    pub detail: String,
}

impl Violation {
    pub fn new(object: impl Into<String>, rule: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { object: object.into(), rule: rule.into(), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: rule `{}` violated", self.object, self.rule)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Every violation found while validating a scene, not just the first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} validation error(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}
