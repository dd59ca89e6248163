use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed input to a constructor (bad index, shape or parameter).
    #[error("invalid construction: {0}")]
    Construction(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The interaction digraph has no root reaching every vertex.
    #[error("digraph has no spanning tree")]
    NoSpanningTree,

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The integrator left the region where the flow is defined.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }
}
