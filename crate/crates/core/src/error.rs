use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    #[error("empty scanpath")]
    EmptyScanpath,
    #[error("{what} needs at least {need} elements, got {got}")]
    TooShort {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("trial duration is zero")]
    ZeroDuration,
    #[error("no temporal overlap between gaze and taps")]
    NoOverlap,
    #[error("character {0:?} is not on the keyboard")]
    UntypeableChar(char),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        CoreError::Invalid {
            what,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
