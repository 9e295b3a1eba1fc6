//! End-to-end experiment running: the conversation loop, paired base/meta
//! comparisons, tolerance sweeps, switch-frequency counts and report files.

pub mod config;
pub mod conversation;
pub mod experiment;
pub mod report;

pub use config::{AlternativesSource, CatalogSource, ExperimentConfig, SimulatorMode, SyntheticCatalog, TargetSource};
pub use conversation::{evaluate_trace, ConversationRunner, ConversationTrace, TurnRecord};
pub use experiment::{
    compare, rank_systems, run_experiment, switch_frequency_report, tolerance_sweep, Comparison, ComparisonTable,
    RunReport, Setup, SweepReport,
};
