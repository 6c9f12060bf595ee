use alloc::string::String;
use core::fmt;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform.
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An argument violated a documented precondition.
    InvalidInput(String),
    /// The request is well formed but outside what is implemented.
    Unsupported(String),
    /// A computed quantity failed a self-check (e.g. a non-integral
    /// multiplicity).
    Consistency(String),
    /// A caller-supplied callback or cache broke its contract.
    Contract(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => write!(
                f,
                "dimension mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Consistency(msg) => write!(f, "internal consistency check failed: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Diverged { epoch, detail } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}
