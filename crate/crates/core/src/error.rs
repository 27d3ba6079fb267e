use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or parameter outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// `line` 0 marks a command-line flag.
    #[error("{}: key `{key}`: {msg}", source_of(*.line))]
    Config {
        line: usize,
        key: String,
        msg: String,
    },

    /// A configuration that parses but violates an invariant.
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("numerical divergence at t = {t:.9} s: {msg}")]
    Divergence { t: f64, msg: String },

    #[error("no gain crossover in [{lo:.3e}, {hi:.3e}] rad/s")]
    SearchRange { lo: f64, hi: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn source_of(line: usize) -> String {
    if line == 0 {
        "command line".into()
    } else {
        format!("config line {line}")
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
