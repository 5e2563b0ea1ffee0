use std::fmt;

/// A failed command, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or configuration; exit code 1.
    Usage(anyhow::Error),
    /// Anything that went wrong while running; exit code 2.
    Runtime(anyhow::Error),
    /// A verified property did not hold; exit code 3.
    Violation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Violation(_) => 3,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "usage error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime error: {e:#}"),
            Failure::Violation(msg) => write!(f, "violation: {msg}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<hexcell_core::Error> for Failure {
    fn from(e: hexcell_core::Error) -> Self {
        match e {
            hexcell_core::Error::Config(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<hexcell_learn::LearnError> for Failure {
    fn from(e: hexcell_learn::LearnError) -> Self {
        use hexcell_learn::LearnError;
        match e {
            LearnError::Config(_) | LearnError::Sim(hexcell_core::Error::Config(_)) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;
