use thiserror::Error;

#[derive(Debug, Error)]
pub enum SfError {
    #[error(transparent)]
    Poly(#[from] polyalg::PolyError),

    #[error(transparent)]
    Sos(#[from] soscomp::SosError),

    #[error("model error: {0}")]
    Model(String),

    #[error("initialization stalled: rho stuck at {rho:.4e} after {iters} iterations (history: {history:?})")]
    InitStalled {
        rho: f64,
        iters: usize,
        history: Vec<f64>,
    },

    #[error("{part} infeasible after a feasible predecessor at iteration {iter}: {detail}; problem dumped to {dump}")]
    AlternationBroken {
        part: String,
        iter: usize,
        detail: String,
        dump: String,
    },

    #[error("slack synthesis infeasible: bound family `{family}` failed ({detail}); certificate is likely defective")]
    SlackInfeasible { family: String, detail: String },

    #[error("filter solve failed: {0}")]
    Filter(String),

    #[error("integration failure at t = {t:.6e}: {why}; last state {state:?}")]
    Integration {
        t: f64,
        why: String,
        state: Vec<f64>,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad certificate file: {0}")]
    BadCertificate(String),
}
