//! Scenario files: the JSON description of one experiment.
//!
//! A scenario names a specification (with its parameters), a thread count,
//! the recorded history split into `x` and `y`, the input script to drive a
//! machine with, and the bounds and seed that make every run reproducible.
//! The JSON schema is documented in `docs/scenario-schema.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scrlab_core::history::{History, Invocation, ThreadId};
use scrlab_core::openclose::{oc_oracle, ref_exhibits, OpenCloseOracle};
use scrlab_core::rule_machine::witness_alphabet;
use scrlab_core::spec::{sim_commutes, CheckError, CommutativityReport, SearchBounds, SpecOracle};

/// Which specification a scenario runs against.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpecConfig {
    OpenClose { fd_bound: i64 },
}

/// One entry of the input script: an invocation without a response.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ScriptStep {
    pub thread: u32,
    pub op: String,
    #[serde(default)]
    pub args: Vec<i64>,
}

impl ScriptStep {
    pub fn call(&self) -> (ThreadId, Invocation) {
        (
            ThreadId(self.thread),
            Invocation::new(self.op.clone(), self.args.iter().copied()),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub spec: SpecConfig,
    pub threads: u32,
    pub x: History,
    pub y: History,
    pub input_script: Vec<ScriptStep>,
    pub bounds: SearchBounds,
    pub witness_bound: usize,
    pub perturbations: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("commutativity check exceeded its bounds: {0}")]
    Check(#[from] CheckError),
    #[error("the region y does not SIM-commute in x ++ y under the scenario bounds")]
    NotSimCommutative { report: Box<CommutativityReport> },
    #[error("x ++ y is not exhibited by the reference implementation")]
    NotExhibited,
}

impl Scenario {
    /// Parses and structurally validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parses and structurally validates scenario JSON.
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate_structure()?;
        Ok(scenario)
    }

    pub fn oracle(&self) -> OpenCloseOracle {
        match self.spec {
            SpecConfig::OpenClose { fd_bound } => oc_oracle(fd_bound),
        }
    }

    pub fn thread_universe(&self) -> Vec<ThreadId> {
        ThreadId::universe(self.threads)
    }

    pub fn script(&self) -> Vec<(ThreadId, Invocation)> {
        self.input_script.iter().map(ScriptStep::call).collect()
    }

    /// The `(thread, invocation)` alphabet for witness searches.
    pub fn witness_pairs(&self) -> Vec<(ThreadId, Invocation)> {
        witness_alphabet(&self.thread_universe(), self.oracle().invocations())
    }

    /// Structural checks every command applies at load time.
    fn validate_structure(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        match self.spec {
            SpecConfig::OpenClose { fd_bound } if fd_bound < 1 => {
                return invalid(format!("fd_bound must be at least 1, got {fd_bound}"));
            }
            _ => {}
        }
        if self.threads == 0 {
            return invalid("thread count must be at least 1".to_string());
        }
        if self.perturbations == 0 {
            return invalid("perturbations must be at least 1".to_string());
        }
        let oracle = self.oracle();
        for (label, h) in [("x", &self.x), ("y", &self.y)] {
            for a in h {
                if a.thread.0 >= self.threads {
                    return invalid(format!("{label} uses {} beyond the thread count", a.thread));
                }
                if a.response.is_pending() {
                    return invalid(format!("{label} stores a pending response"));
                }
                if !oracle.invocations().contains(&a.invocation) {
                    return invalid(format!(
                        "{label} uses invocation {} outside the alphabet",
                        a.invocation
                    ));
                }
            }
        }
        for (idx, step) in self.input_script.iter().enumerate() {
            let (t, i) = step.call();
            if t.0 >= self.threads {
                return invalid(format!("script step {idx} uses {t} beyond the thread count"));
            }
            if !oracle.invocations().contains(&i) {
                return invalid(format!(
                    "script step {idx} uses invocation {i} outside the alphabet"
                ));
            }
        }
        if self.y.len() > self.bounds.max_region_len {
            return invalid(format!(
                "y has {} actions but max_region_len is {}",
                self.y.len(),
                self.bounds.max_region_len
            ));
        }
        if !oracle.is_member(&self.x.concat(&self.y)) {
            return invalid("x ++ y is not a member of the specification".to_string());
        }
        Ok(())
    }

    /// Machine-run gate: `y` must SIM-commute in `x ++ y` under the bounds.
    pub fn validate_sim(&self) -> Result<(), ScenarioError> {
        let oracle = self.oracle();
        let report = sim_commutes(
            &oracle,
            &self.x,
            &self.y,
            &self.thread_universe(),
            &self.bounds,
        )?;
        if report.commutes() {
            Ok(())
        } else {
            Err(ScenarioError::NotSimCommutative {
                report: Box::new(report),
            })
        }
    }

    /// Rule-machine gate: `x ++ y` must be exhibited by the reference
    /// implementation.
    pub fn validate_exhibited(&self) -> Result<(), ScenarioError> {
        let recorded = self.x.concat(&self.y);
        let invocations: Vec<(ThreadId, Invocation)> = recorded
            .iter()
            .map(|a| (a.thread, a.invocation.clone()))
            .collect();
        match ref_exhibits(&invocations) {
            Ok(exhibited) if exhibited == recorded => Ok(()),
            _ => Err(ScenarioError::NotExhibited),
        }
    }
}
