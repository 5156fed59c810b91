//! Scenario runner for the commutativity laboratory: loads scenario files,
//! drives the constructed machines, runs the checkers, and emits
//! reproducible JSON reports.

pub mod report;
pub mod runner;
pub mod scenario;

pub use report::{
    CounterexampleReport, FuzzSummary, MachineKind, SimReport, StepMode, TraceReport,
};
pub use runner::{
    bundled_counterexample, check_sim, counterexample, fuzz, run_machine, run_oracle, run_rule,
    trace_succeeded, FUZZ_SCRIPT_MAX_LEN,
};
pub use scenario::{Scenario, ScenarioError, ScriptStep, SpecConfig};
