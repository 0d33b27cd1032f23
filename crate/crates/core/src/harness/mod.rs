//! Mission harness: scenario configuration, the mission loop, metrics and
//! evaluation suites.

pub mod config;
pub mod metrics;
pub mod record;
pub mod runner;
pub mod suite;

pub use config::{AttackSource, EnvironmentSpec, HarnessConfig, RecoveryMode, ScenarioConfig};
pub use record::{Controller, EpisodeRecord, Outcome, StepRecord, SummaryRow};
pub use runner::{run_mission, simulate, EpisodeOutput, Pilot};
pub use suite::{build_suite, evaluate_suite, Suite, SuiteConfig, SuiteEntry};
