use thiserror::Error;

/// Errors raised by the detection engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {func}: {message}")]
    Domain { func: &'static str, message: String },

    /// An observation that cannot belong to the monitored family.
    #[error("invalid observation {value}: {reason}")]
    InvalidObservation { value: f64, reason: &'static str },

    /// A stream-level failure, tagged with the 1-based position of the offending value.
    #[error("at stream position {position}: {source}")]
    AtPosition {
        position: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Survivor filtering ran out of null streams before reaching the horizon.
    #[error(
        "calibration exhausted at t={t}: {survivors} surviving streams, need at least {required}; \
         increase the replication count"
    )]
    CalibrationExhausted {
        t: usize,
        survivors: usize,
        required: usize,
    },

    #[error("improper prior Gamma({alpha}, {beta}): marginal likelihoods are undefined (Lindley's paradox: the change model receives zero posterior weight)")]
    ImproperPrior { alpha: f64, beta: f64 },

    #[error("threshold table parse error at line {line}: {message}")]
    TableParse { line: usize, message: String },
}

impl Error {
    pub(crate) fn domain(func: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            func,
            message: message.into(),
        }
    }

    /// Attach a stream position to an error.
    pub fn at(self, position: usize) -> Self {
        Error::AtPosition {
            position,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
