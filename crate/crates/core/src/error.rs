use thiserror::Error;

/// Which block of the alternating solver produced an infeasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Step {
    Sensing,
    Association,
    Power,
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Step::Sensing => f.write_str("sensing-time step"),
            Step::Association => f.write_str("association step"),
            Step::Power => f.write_str("power step"),
        }
    }
}

/// Constraint family that made the association search infeasible at its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InfeasibleCause {
    /// BBU processing caps or fronthaul caps admit no served user.
    Capacity,
    /// The reserved rate of this slice exceeds every attainable slice rate.
    SliceRate { slice: usize },
    /// Every leaf was pruned; no single family is responsible.
    Exhausted,
}

impl std::fmt::Display for InfeasibleCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleCause::Capacity => f.write_str("BBU/fronthaul capacity (C3/C7) admits no user"),
            InfeasibleCause::SliceRate { slice } => {
                write!(f, "reserved rate of slice {slice} unattainable (C10)")
            }
            InfeasibleCause::Exhausted => f.write_str("search exhausted without a feasible leaf"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("target unattainable: {0}")]
    Unattainable(String),

    #[error("detection target cannot be met on sub-carriers {subcarriers:?} within the frame")]
    SensingInfeasible { subcarriers: Vec<usize> },

    #[error("reserved rate of slice {slice} cannot be met")]
    SliceRateInfeasible { slice: usize },

    #[error("association problem infeasible: {0}")]
    AssociationInfeasible(InfeasibleCause),

    #[error("inner power solve did not converge (residual {residual:e})")]
    PowerNotConverged { residual: f64 },

    #[error("joint solve infeasible in the {step}: {source}")]
    JointInfeasible {
        step: Step,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors that describe an infeasible optimization model rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::SensingInfeasible { .. }
                | Error::SliceRateInfeasible { .. }
                | Error::AssociationInfeasible(_)
                | Error::JointInfeasible { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
