use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A mathematical precondition does not hold (no solution exists, operator undefined, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input: bad interval, mismatched grids, missing starting ray.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The Euler scheme produced a non-finite value.
    #[error("numerical blow-up at step {step}: value {value}")]
    NumericalBlowup { step: usize, value: f64 },

    /// Not enough events in the path to form an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The stochastic clock of the source path does not reach the requested horizon.
    #[error("clock underrun: source clock reached {reached} < {required}; extend the source by a factor of at least {factor:.3}")]
    ClockUnderrun {
        reached: f64,
        required: f64,
        factor: f64,
    },

    /// The switching point was never approached within the simulation horizon.
    #[error("switch point not reached within the horizon (closest tree distance {closest})")]
    SwitchNotReached { closest: f64 },

    /// An error raised while simulating one path of a batch.
    #[error("path {index}: {source}")]
    Path { index: u64, source: Box<Error> },
}

impl Error {
    /// Whether this error stems from a numerical failure during simulation
    /// (as opposed to invalid configuration or arguments).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Path { source, .. } => source.is_numerical(),
            _ => matches!(
                self,
                Error::NumericalBlowup { .. }
                    | Error::ClockUnderrun { .. }
                    | Error::SwitchNotReached { .. }
                    | Error::InsufficientData(_)
            ),
        }
    }

    /// Tags the error with the index of the path that raised it.
    pub fn in_path(self, index: u64) -> Self {
        match self {
            e @ Error::Path { .. } => e,
            e => Error::Path { index, source: Box::new(e) },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
