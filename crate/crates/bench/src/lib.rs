//! Experiment harness for the `coherency` crate.
//!
//! * [`scenario`]: scenario files and their validation.
//! * [`run`]: one simulation with certificates and summary statistics.
//! * [`cases`]: the three-case experiment on a 35-generator grid.
//! * [`sweep`]: one-parameter sweeps over `λ₂` or the flow scale `k`.
//! * [`output`]: CSV and report files.

pub mod cases;
pub mod output;
pub mod run;
pub mod scenario;
pub mod sweep;

pub use cases::{builtin_cases, CaseConfig, CaseSuite, GridSource};
pub use run::{run_scenario, run_scenario_full, RunError, RunReport};
pub use scenario::{load_scenario, Scenario, ScenarioError};
pub use sweep::{sweep, SweepParam};
