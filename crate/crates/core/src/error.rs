use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("popularity distribution has no positive mass")]
    EmptyDistribution,

    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("rank {rank} is outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The model is outside its validity range: the average spectral
    /// efficiency at `rank` is not positive.
    #[error("non-positive spectral efficiency {value} at rank {rank}")]
    NonPositiveSpectralEfficiency { rank: usize, value: f64 },

    #[error("interference schedule covers {available} ranks but {needed} are required")]
    InterferenceTooShort { available: usize, needed: usize },

    /// A group carries traffic but received no bandwidth.
    #[error("rank {rank} carries load but has zero bandwidth (unbounded delay)")]
    UnboundedDelay { rank: usize },

    #[error("file {file} is already fully cached")]
    FullyCached { file: usize },

    #[error("instance too large to enumerate: about {estimate:.3e} candidate placements (limit {limit})")]
    InstanceTooLarge { estimate: f64, limit: u64 },

    #[error("simulation region too small: {0}")]
    RegionTooSmall(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
