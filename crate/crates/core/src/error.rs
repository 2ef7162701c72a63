use thiserror::Error;

/// Errors produced by the toolkit. Each variant maps to a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("outside domain: {0}")]
    Domain(String),

    #[error(
        "entropy deficit: target rate {target:.6} bits, extraction rate {rate:.6} bits, \
         available H(X|Y) {available:.6} bits"
    )]
    EntropyDeficit {
        target: f64,
        rate: f64,
        available: f64,
    },

    #[error("combinatorial blow-up: {0}")]
    BlowUp(String),

    #[error("resource cap exceeded: {0}")]
    Cap(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 usage, 2 validation, 3 resource cap, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Validation(_)
            | Error::Dimension { .. }
            | Error::Domain(_)
            | Error::EntropyDeficit { .. }
            | Error::Io { .. } => 2,
            Error::BlowUp(_) | Error::Cap(_) => 3,
            Error::Invariant(_) => 4,
        }
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}
