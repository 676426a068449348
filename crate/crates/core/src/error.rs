use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("residues do not form a difference set mod {modulus}: difference {difference} occurs {count} times, expected {expected}")]
    NotADifferenceSet {
        modulus: u64,
        difference: u64,
        count: u64,
        expected: u64,
    },
    #[error("residue {0} appears more than once")]
    DuplicateElements(u64),
    #[error("value {value} outside the valid range {range}")]
    OutOfRange { value: i64, range: String },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("{0} is not congruent to 3 mod 4")]
    WrongResidueClass(u64),
    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("requested {requested} indices but the Fourier range holds only {available}")]
    TooManyIndices { requested: usize, available: usize },
    #[error("difference-set index {index} lies outside the Fourier range [{lo}, {hi}]")]
    DsOutOfRange { index: i64, lo: i64, hi: i64 },
    #[error("column {0} has zero norm")]
    ZeroColumn(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dictionary of {rows}x{cols} entries needs {bytes} bytes, above the {budget}-byte budget")]
    DimensionOverflow {
        rows: usize,
        cols: usize,
        bytes: u128,
        budget: u128,
    },
    #[error("quadrature did not converge at frequency {frequency_hz} Hz (difference {difference:e})")]
    QuadratureFailure { frequency_hz: f64, difference: f64 },
    #[error("operation requires a {expected} waveform")]
    WrongKind { expected: &'static str },
    #[error("target echo at delay {delay_s} s with pulse width {pulse_width_s} s exits the PRI window")]
    DelayOverrun { delay_s: f64, pulse_width_s: f64 },
    #[error("Fourier index {index} carries no waveform energy (|c_k| = {magnitude:e})")]
    NumericallyUnsampledBin { index: i64, magnitude: f64 },
    #[error("least-squares system on support {support:?} is rank deficient")]
    RankDeficientSupport { support: Vec<usize> },
    #[error("no trials to aggregate")]
    EmptyTrialSet,
    #[error("no true detections to compute an RMS error from")]
    NoDetections,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("result kind `{found}` cannot be emitted as `{requested}`")]
    KindMismatch { requested: String, found: String },
    #[error("trial {trial} at point {point}: {source}")]
    Trial {
        point: usize,
        trial: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Validation failures (bad input or configuration) as opposed to
    /// failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NotADifferenceSet { .. }
                | Error::DuplicateElements(_)
                | Error::OutOfRange { .. }
                | Error::NotPrime(_)
                | Error::WrongResidueClass(_)
                | Error::UnknownName(_)
                | Error::NonPositiveParameter { .. }
                | Error::InvalidParameter(_)
                | Error::TooManyIndices { .. }
                | Error::DsOutOfRange { .. }
                | Error::DimensionMismatch(_)
                | Error::Config(_)
                | Error::KindMismatch { .. }
                | Error::WrongKind { .. }
        )
    }
}
