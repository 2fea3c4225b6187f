use std::fmt;
use std::process::ExitCode;

/// A command failure, classified by exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or a refused overwrite (exit 1).
    Usage(anyhow::Error),
    /// Missing, unreadable or unusable input (exit 2).
    Data(anyhow::Error),
    /// Non-finite values or a failed gradient check (exit 3).
    Numeric(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, err) = match self {
            Failure::Usage(e) => ("usage error", e),
            Failure::Data(e) => ("data error", e),
            Failure::Numeric(e) => ("numeric failure", e),
        };
        write!(f, "{kind}: {err:#}")
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Tags an error as a data failure with context.
pub trait DataContext<T> {
    fn data_ctx(self, what: impl FnOnce() -> String) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> DataContext<T> for Result<T, E> {
    fn data_ctx(self, what: impl FnOnce() -> String) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into().context(what())))
    }
}
