use std::fmt;
use std::path::Path;

/// A command failure, printable as one `key=value` line.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    /// Config key path or file the failure is attributed to.
    pub key: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, key: Option<String>, message: impl Into<String>) -> Self {
        CliError {
            kind,
            key,
            message: message.into(),
        }
    }

    pub fn config(key: &str, message: impl Into<String>) -> Self {
        Self::new("config", Some(key.to_string()), message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new("io", Some(path.display().to_string()), err.to_string())
    }

    /// Attaches a key to an error that does not carry one yet.
    pub fn at(mut self, key: impl Into<String>) -> Self {
        self.key.get_or_insert_with(|| key.into());
        self
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.kind == "config" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self.message.replace(['\n', '\r'], " ");
        write!(f, "error: kind={}", self.kind)?;
        if let Some(key) = &self.key {
            write!(f, " key={key}")?;
        }
        write!(f, " message={message}")
    }
}

impl std::error::Error for CliError {}

impl From<safespeed::Error> for CliError {
    fn from(e: safespeed::Error) -> Self {
        use safespeed::Error as E;
        let kind = match &e {
            E::Validation(_) => "validation",
            E::Schema(_) | E::MissingColumns(_) => "schema",
            E::Domain(_) => "domain",
            E::Format { .. } | E::Csv(_) => "format",
            E::Io { .. } => "io",
        };
        let key = match &e {
            E::Io { path, .. } => Some(path.display().to_string()),
            _ => None,
        };
        CliError::new(kind, key, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
