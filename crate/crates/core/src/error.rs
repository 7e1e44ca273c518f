use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A scalar argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A configuration field violated its invariant. `field` is a path such as
    /// `players[2].beta`.
    #[error("invalid config at {field}: {detail}")]
    InvalidConfig { field: String, detail: String },

    /// An attention profile failed feasibility validation against its config.
    #[error("infeasible attention profile: {detail}")]
    InfeasibleProfile { detail: String },

    /// An iterative solver failed to reach its tolerance.
    #[error("solver failed to converge: residual {residual:.3e} after {iterations} iterations{}", bracket_note(.bracket))]
    NonConvergence {
        residual: f64,
        iterations: usize,
        /// Bisection bracket at failure, when applicable.
        bracket: Option<(f64, f64)>,
    },

    /// A precondition of a comparative-statics or planner operation does not
    /// hold for the given instance.
    #[error("assumption violated: {detail}")]
    AssumptionViolated { detail: String },

    /// Parameters outside the validity region of the planner construction.
    #[error("outside validity region: {condition}")]
    InvalidRegion { condition: String },
}

fn bracket_note(bracket: &Option<(f64, f64)>) -> String {
    match bracket {
        Some((lo, hi)) => format!(" (bracket [{lo:.6e}, {hi:.6e}])"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            detail: detail.into(),
        }
    }
}
