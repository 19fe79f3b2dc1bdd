use thiserror::Error;

/// Errors raised by the model, numerics and I/O layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed or inconsistent model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the domain where an operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vectors or grids that do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state became non-finite while integrating a path.
    #[error("divergence at grid index {index}: {what}")]
    Divergence { index: usize, what: String },

    /// The dispersion vanished where the control had to be recovered.
    #[error("singular control: dispersion vanishes at grid index {index}")]
    SingularControl { index: usize },

    /// A coarse grid does not divide the fine grid it is sampled from.
    #[error("resolution error: {0}")]
    Resolution(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::SingularControl { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
