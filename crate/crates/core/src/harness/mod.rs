//! Experiment harness: configuration, Monte-Carlo sweeps and reports.

pub mod config;
pub mod reports;
pub mod sim;
pub mod stats;

pub use config::{DetectorKind, DetectorSpec, ExperimentSpec, RunSpec, SystemSpec, PRESETS};
pub use reports::{run_bandwidth_report, run_complexity_report, run_diagnostics, BandwidthReport, ComplexityReport};
pub use sim::{run_ber_sweep, run_convergence, ConvergenceResult, StoppingRule, SweepResult, TrialErrors};
pub use stats::{linear_fit, snr_at_ber, wilson_interval};
