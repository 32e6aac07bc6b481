use thiserror::Error;

#[derive(Debug, Error)]
pub enum SosError {
    #[error(transparent)]
    Poly(#[from] polyalg::PolyError),

    #[error("duplicate decision name `{0}`")]
    DuplicateDecision(String),

    #[error("unknown decision `{0}`")]
    UnknownDecision(String),

    #[error(
        "bilinear product: both factors carry decision variables \
         (left: {left}, right: {right}); split across alternation phases"
    )]
    Bilinear { left: String, right: String },

    #[error("multiplier for decision-carrying generator must be fixed (generator: {0})")]
    DecisionGeneratorNeedsFixedMultiplier(String),

    #[error("empty program: nothing to lower")]
    EmptyProgram,

    #[error("empty basis for decision `{0}`")]
    EmptyBasis(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error(
        "unverified solution: {what} residual {got:.3e} exceeds tolerance {tol:.3e}"
    )]
    UnverifiedSolution { what: String, got: f64, tol: f64 },

    #[error("inconsistent equality row {row}: 0 = {rhs:.3e}")]
    InconsistentRow { row: usize, rhs: f64 },
}
