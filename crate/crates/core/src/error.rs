use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid needs at least one interior node per dimension")]
    EmptyGrid,

    /// A coefficient value violated uniform ellipticity (`a >= a_min > 0`).
    #[error("uniform ellipticity violated: coefficient {value} at lattice point {index} is not positive")]
    Ellipticity { index: usize, value: f64 },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("problem has {variables} variables, oracle limit is {limit}")]
    SizeGuard { variables: usize, limit: usize },

    #[error("barrier Newton iteration failed: {0}")]
    Newton(String),

    #[error("hard-constrained reference solve failed: {0}")]
    ReferenceFailed(String),

    #[error("decay fit needs at least 3 usable points, got {0}")]
    InsufficientData(usize),

    #[error("constraint never active: all slack norms are zero")]
    ConstraintNeverActive,

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_scenario(self, scenario: usize) -> Self {
        Error::Scenario {
            scenario,
            source: Box::new(self),
        }
    }
}
