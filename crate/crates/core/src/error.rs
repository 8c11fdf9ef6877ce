use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no guided TE{order} mode at {wavelength} nm ({reason})")]
    NoGuidedMode {
        order: usize,
        wavelength: f64,
        reason: &'static str,
    },

    #[error("phase-matching residual has no sign change in [{lo}, {hi}] nm")]
    NoResonanceInWindow { lo: f64, hi: f64 },

    #[error("bandwidth {bandwidth} nm is below the length limit {limit} nm")]
    BandwidthBelowLengthLimit { bandwidth: f64, limit: f64 },

    #[error("perturbation has {got} entries, grating has {expected} segments")]
    SegmentationMismatch { expected: usize, got: usize },

    #[error("cascade composition is {0}, operation requires the other law")]
    CompositionMismatch(&'static str),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("off-band window selects no grid points")]
    WindowOutOfRange,

    #[error("notch depth {depth_db:.3} dB is too shallow to measure a bandwidth")]
    NotchTooShallow { depth_db: f64 },

    #[error("spectrum is flat within 0.1 dB")]
    NoNotchFound,

    #[error("infeasible design target: {0}")]
    InfeasibleTarget(String),

    #[error("spectrum line {line}: {message}")]
    SpectrumParse { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidInput(msg()))
    }
}
