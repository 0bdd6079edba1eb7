use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power must be positive (signal = {signal}, noise = {noise})")]
    NonPositivePower { signal: f64, noise: f64 },

    #[error("empty input")]
    Empty,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("kernel weights sum to zero at t = {0}")]
    DegenerateWeights(f64),

    #[error("lag {lag} out of range for series of length {len}")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("correction factor degenerate across grid")]
    DegenerateCorrection,

    #[error("cannot draw {k} distinct blocks of length {b} from {n} samples")]
    TooManyBlocks { n: usize, b: usize, k: usize },

    #[error("too many skipped blocks: {skipped} of {total} (limit {limit})")]
    ExcessiveSkips {
        skipped: usize,
        total: usize,
        limit: usize,
    },

    #[error("frequency {frequency_hz} Hz violates Nyquist for sample rate {sample_rate_hz} Hz")]
    Nyquist {
        frequency_hz: f64,
        sample_rate_hz: f64,
    },
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error channel.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonPositivePower { .. } => "non_positive_power",
            Error::Empty => "empty_input",
            Error::NonFinite(_) => "non_finite",
            Error::DegenerateWeights(_) => "degenerate_weights",
            Error::LagOutOfRange { .. } => "lag_out_of_range",
            Error::DegenerateCorrection => "degenerate_correction",
            Error::TooManyBlocks { .. } => "too_many_blocks",
            Error::ExcessiveSkips { .. } => "excessive_skips",
            Error::Nyquist { .. } => "nyquist_violation",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
