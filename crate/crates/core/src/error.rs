use std::io;

use thiserror::Error;

/// Errors produced anywhere in the scheduling / beamforming pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The effective channels of the scheduled devices are linearly dependent,
    /// so zero-forcing directions do not exist.
    #[error("singular configuration: {0}")]
    SingularConfiguration(String),

    /// No beamformer meets the multicast QoS requirement for this scenario.
    /// `slack` is the worst per-device ratio between the best attainable
    /// multicast SINR and the threshold (below 1 means unattainable).
    #[error("scenario infeasible ({constraint}): slack {slack:.6e}")]
    ScenarioInfeasible { constraint: String, slack: f64 },

    /// A convex subproblem that must be feasible was reported infeasible.
    #[error("internal consistency failure: {message}\n{dump}")]
    InternalConsistency { message: String, dump: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn validation(field: &str, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: msg.into(),
        }
    }

    /// True for failures that describe the scenario rather than a bug or bad input.
    pub fn is_scenario_failure(&self) -> bool {
        matches!(
            self,
            Error::ScenarioInfeasible { .. } | Error::SingularConfiguration(_)
        )
    }
}
