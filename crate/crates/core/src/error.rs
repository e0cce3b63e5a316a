use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("chain diverged at step {step} (alpha = {alpha}{})", replica_suffix(.replica))]
    Divergence {
        step: usize,
        alpha: f64,
        replica: Option<usize>,
    },

    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn replica_suffix(replica: &Option<usize>) -> String {
    match replica {
        Some(r) => format!(", replica {r}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attaches a replica index to a divergence error; other variants pass through.
    pub fn in_replica(self, replica: usize) -> Self {
        match self {
            Error::Divergence { step, alpha, .. } => Error::Divergence {
                step,
                alpha,
                replica: Some(replica),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
