use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] icebreaker_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> u8 {
        use icebreaker_core::Error as Core;
        match self {
            Error::Config(_) | Error::Core(Core::Config(_)) => 1,
            Error::Core(Core::TrainingDiverged(_)) => 3,
            Error::Core(Core::Eval(_)) => 5,
            Error::Io { .. } | Error::Format(_) | Error::Core(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use icebreaker_core::Error as Core;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::from(Core::Config("x".into())).exit_code(), 1);
        assert_eq!(Error::from(Core::TrainingDiverged("nan".into())).exit_code(), 3);
        assert_eq!(Error::Format("bad".into()).exit_code(), 4);
        assert_eq!(Error::from(Core::Data("x".into())).exit_code(), 4);
        assert_eq!(Error::io("f", io::Error::other("x")).exit_code(), 4);
        assert_eq!(Error::from(Core::Eval("missing".into())).exit_code(), 5);
    }
}
