//! Shared helpers for the line-oriented text formats.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }

    pub fn at_line(line: usize, message: impl Into<String>) -> Self {
        Self::new(line, 1, message)
    }
}

/// Parses `token` as `T`, reporting `what` on failure.
pub(crate) fn parse_token<T: FromStr>(token: &str, line: usize, what: &str) -> Result<T, ParseError> {
    token
        .parse()
        .map_err(|_| ParseError::at_line(line, format!("invalid {what} `{token}`")))
}

/// Formats a probability or value so that parsing it back yields the same bits.
pub(crate) struct Exact(pub f64);

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // `{:?}` is the shortest representation that round-trips and always
        // carries a decimal point.
        write!(f, "{:?}", self.0)
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}
