use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent constraint system: {0}")]
    Inconsistent(String),

    #[error("maximum-entropy fit for subset {subset:?} stopped at the iteration limit (residual {residual:e})")]
    NotConverged { subset: Vec<usize>, residual: f64 },

    #[error("constraint system for subset {subset:?} is infeasible")]
    Infeasible { subset: Vec<usize> },

    #[error("search space of 2^{log2_size:.2} exceeds the cap of 2^{cap_log2}")]
    TooLarge { log2_size: f64, cap_log2: u32 },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("instance file: {0}")]
    Instance(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
