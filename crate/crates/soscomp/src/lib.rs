//! Build SOS programs from quadratic-module membership constraints and lower
//! them to a standard conic problem (PSD / second-order / nonnegative cones
//! plus equalities); solve via an interior-point backend and recover
//! polynomial solutions.
//!
//! The lowering is the kernel ("primal") form: Gram entries of every
//! SOS-kind object are scalar decision variables, and each membership
//! identity contributes one equality row per monomial of its support.

// Force linkage of the system BLAS/LAPACK used by the solver's SDP path.
extern crate openblas_src;

mod conic;
mod error;
mod expr;
mod lower;
mod program;
mod solve;

pub use conic::{ConicProblem, ProblemStats, SparseRows};
pub use error::SosError;
pub use expr::{PolyExpr, ScalarAffine};
pub use program::{
    DecisionId, DecisionKind, DecisionRole, GeneratorSpec, Membership, MembershipId,
    MultiplierSpec, Objective, PolyDecision, Sense, SosProgram,
};
pub use solve::{solve, InfeasibleCert, Solution, SolveOutcome, SolverConfig};
