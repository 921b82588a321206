//! Experiment orchestration: configs, trials, suites, traces, plots and the
//! live session.

pub mod config;
pub mod plots;
pub mod practice;
pub mod session;
pub mod suite;
pub mod summary;
pub mod trace;
pub mod trial;

pub use config::{ScenarioConfig, ScenarioKind};
pub use suite::{run_suite, SuiteReport};
pub use summary::RunSummary;
pub use trace::{Phase, TraceRecord};
pub use trial::{run_trial, run_trial_at, Trial, TrialOutput};
