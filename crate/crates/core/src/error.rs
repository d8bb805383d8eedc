use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no opinion for user `{0}`")]
    MissingUser(String),

    #[error("influencer `{influencer}` of recipient `{recipient}` has no initial opinion")]
    DanglingInfluencer { recipient: String, influencer: String },

    #[error("no series for `{user}`, listed under recipient `{recipient}`")]
    MissingSeries { recipient: String, user: String },

    #[error("series length mismatch: `{user}` has {found} kernels, expected {expected}")]
    LengthMismatch {
        user: String,
        expected: usize,
        found: usize,
    },

    #[error("series too short: {0} kernels, need at least {1}")]
    SeriesTooShort(usize, usize),

    #[error("series for `{0}` has no observed kernel")]
    AllMissing(String),

    #[error("series for `{0}` still has missing kernels; forward-fill it first")]
    Unfilled(String),

    #[error("non-finite opinion value {0}")]
    NonFinite(f64),

    #[error("F distribution is undefined for x = {0}")]
    Domain(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("id mismatch: {0}")]
    IdMismatch(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
