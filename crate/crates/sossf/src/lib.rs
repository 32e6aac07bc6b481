//! Synthesis and runtime of the advanced safety filter: compatible control
//! barrier functions and a control Lyapunov-like function are found by an
//! alternating sequence of SOS programs, a slack-polynomial synthesis shapes
//! the runtime QCQP, and a closed-loop simulator validates the result on an
//! ac/dc power-converter case study.

pub mod certificate;
pub mod model;
pub mod runtime;
pub mod sim;
pub mod slack;
pub mod synth;

mod error;
pub use error::SfError;
