use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("user placement failed: {attempts} rejection-sampling attempts exhausted (user {user})")]
    Placement { user: usize, attempts: usize },

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("zero-forcing requires M >= K+1 (got M={m}, K={k})")]
    ZfAntennaShortfall { m: usize, k: usize },

    #[error("linear program error: {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("cone program error: {0}")]
    Socp(String),

    #[error("solution failed post-solve verification: {0}")]
    Certificate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
