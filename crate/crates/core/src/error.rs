use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown coefficient `{name}`; available: {}", available.join(", "))]
    UnknownCoefficient { name: String, available: Vec<String> },

    #[error("invalid parameters for `{name}`: {reason}")]
    InvalidParameters { name: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// The Brownian path ended before the time change reached the SDE horizon.
    /// `needed` is a lower bound on the Brownian time still required.
    #[error("brownian path exhausted at time {available} (need more than {needed})")]
    PathExhausted { needed: f64, available: f64 },

    #[error("diffusion `{label}` breached its bounds: sigma({t}, {x}) = {value} not in [{lower}, {upper}]")]
    ContractBreach {
        label: String,
        t: f64,
        x: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("degenerate time-change step {step} at knot {knot}")]
    DegenerateStep { knot: usize, step: f64 },

    #[error("sample {index} failed in {module}: {source}")]
    Sample {
        index: u64,
        module: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the simulation breaching a runtime contract,
    /// as opposed to bad input.
    pub fn is_runtime_breach(&self) -> bool {
        match self {
            Error::ContractBreach { .. }
            | Error::DegenerateStep { .. }
            | Error::PathExhausted { .. } => true,
            Error::Sample { source, .. } => source.is_runtime_breach() || !source.is_input_error(),
            _ => false,
        }
    }

    fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownCoefficient { .. }
                | Error::InvalidParameters { .. }
                | Error::InvalidArgument(_)
                | Error::Config { .. }
        )
    }
}
