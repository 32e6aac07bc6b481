//! Closed-loop simulation and sampled certificate verification: numerical
//! integration with zero-order-hold control, constraint monitoring,
//! finite-time-convergence measurement and the case-study scenarios.

mod integrate;
mod plot;
mod scenario;
mod verify;

pub use integrate::{integrate, IntegratorConfig, Trajectory};
pub use plot::line_chart_svg;
pub use scenario::{run_scenario, Scenario, ScenarioArtifacts, ScenarioOptions};
pub use verify::{
    measure_convergence, sample_shell, verify_certificate_sampled, CheckResult, ConvergenceReport,
    SampleReport, VerifyOptions,
};
