use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty model")]
    EmptyModel,

    #[error("matrix not positive definite (pivot {index}: {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("LMO failure: {0}")]
    Lmo(String),

    #[error("subproblem not strongly convex")]
    NotStronglyConvex,

    #[error("Kelley requires strong convexity")]
    KelleyNeedsStrongConvexity,

    #[error("active-set cycle cap exceeded: {0}")]
    CycleCap(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("identity violated: {name} residual {residual:e} exceeds {limit:e}")]
    IdentityViolation { name: String, residual: f64, limit: f64 },

    #[error("could not generate feasible polytope after {0} attempts")]
    InfeasibleSynth(usize),

    #[error("iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, iter: usize) -> Error {
        Error::AtIteration { iter, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
