use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum PolyError {
    #[error("variable sets differ: [{left}] vs [{right}]")]
    VarSetMismatch { left: String, right: String },

    #[error("point dimension {got} does not match ambient dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("gram matrix is not symmetric (max asymmetry {0:.3e})")]
    NonSymmetricGram(f64),

    #[error("gram basis/matrix size mismatch: basis {basis}, matrix {rows}x{cols}")]
    GramShapeMismatch {
        basis: usize,
        rows: usize,
        cols: usize,
    },

    #[error("malformed polynomial record: {0}")]
    BadRecord(String),
}
