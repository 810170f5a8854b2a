//! Deterministic simulation of the aggregation protocol: synthetic updates, adversary
//! injection, scenario execution, reports and benchmarks.

pub mod bench;
pub mod run;
pub mod scenario;
pub mod synth;

pub use bench::{bench, BenchRow, BenchSettings};
pub use run::{run_scenario, run_scenario_until, RoundReport, RoundStatus};
pub use scenario::{Adversary, AdversaryBehavior, ScenarioConfig, Stage};
pub use synth::{reference_model, synth_updates, ClientUpdate, Model};
