//! Floating-point sparse multivariate polynomial algebra.
//!
//! Everything downstream (SOS compilation, certificate synthesis, the runtime
//! filter and the simulator) trades in the [`Polynomial`] type defined here.
//! Values are immutable after construction and safe to share across threads;
//! all operations are pure functions.

mod error;
mod gram;
mod monomial;
mod poly;
mod serialize;

pub use error::PolyError;
pub use gram::{is_sos_certificate, GramForm};
pub use monomial::{monomial_basis, Monomial, ParityFilter};
pub use poly::{Polynomial, VarSet};
pub use serialize::PolyRecord;

/// Default tolerance for declaring a Gram matrix positive semidefinite.
pub const PSD_TOL: f64 = 1e-7;

/// Default coefficient magnitude below which solver output is chopped.
pub const CHOP_TOL: f64 = 1e-9;
