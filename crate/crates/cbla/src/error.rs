use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed case: {0}")]
    MalformedCase(String),

    #[error("case has no slack (REF) bus")]
    NoSlackBus,

    #[error("duplicate bus id {0}")]
    DuplicateBusId(u32),

    #[error("in-service branch {from}-{to} has zero impedance")]
    SingularBranch { from: u32, to: u32 },

    #[error("power flow Jacobian factorization failed at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("DC susceptance matrix is singular (disconnected network?)")]
    SingularBMatrix,

    #[error("sampling range infeasible: {discards} consecutive non-converged draws")]
    RangeInfeasible { discards: usize },

    #[error("feature mismatch: model has [{model}], data has [{data}]")]
    FeatureMismatch { model: String, data: String },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("error function spec is not convex: {0}")]
    NonConvexSpec(String),

    #[error("LP is unbounded (check the signs of k1 <= 0 <= k2, not both zero)")]
    UnboundedLP,

    #[error("missing approximation model for {0}")]
    MissingModel(String),

    #[error("unknown quantity `{0}`")]
    UnknownQuantity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
