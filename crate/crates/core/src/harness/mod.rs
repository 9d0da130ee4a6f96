//! Scenarios, end-to-end missions and the benchmark.

mod bench;
mod calibrate;
mod scenario;
mod trial;

pub use bench::{benchmark, benchmark_cases, benchmark_with, BenchReport, BenchRow, TrialRecord};
pub use calibrate::{calibrate_scenario, calibration_pairs};
pub use scenario::{
    default_camera, empty_scenario, generate_square_street, one_wall_scenario, square_street_suite,
    BankSource, HarnessConfig, Scenario, StreetLayout, TrialConfig,
};
pub use trial::{run_trial, run_trial_with_bank, PlannerKind, RunMetrics, TrialOutcome};
