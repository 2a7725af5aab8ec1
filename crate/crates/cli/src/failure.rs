use std::fmt;

use ldgeom_core::Error;

/// A failed run: machine code, message and process exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: String,
    pub message: String,
    pub exit: u8,
}

impl Failure {
    /// Malformed input (exit 1).
    pub fn spec(code: &str, message: impl Into<String>) -> Self {
        Self { code: code.to_string(), message: message.into(), exit: 1 }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: e.code().to_string(), message: e.to_string(), exit: if e.is_domain() { 2 } else { 1 } }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_line = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.code, one_line.trim())
    }
}
