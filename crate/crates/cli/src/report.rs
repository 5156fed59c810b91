//! Report types rendered by every command.
//!
//! Reports serialize to JSON with a fixed field order and no clocks or
//! platform-dependent values, so identical (scenario, seed) inputs produce
//! byte-identical files. The schema is documented in
//! `docs/report-schema.md`.

use std::fmt::Write as _;

use serde::Serialize;

use scrlab_core::history::{History, RespValue};
use scrlab_core::oracle_machine::OracleMachineState;
use scrlab_core::spec::{CommutativityWitness, Verdict};

use crate::scenario::ScriptStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MachineKind {
    Rule,
    Oracle,
}

impl std::fmt::Display for MachineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MachineKind::Rule => write!(f, "rule"),
            MachineKind::Oracle => write!(f, "oracle"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Replay,
    ConflictFree,
    Oracle,
    Emulate,
}

impl std::fmt::Display for StepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StepMode::Replay => "replay",
            StepMode::ConflictFree => "conflict_free",
            StepMode::Oracle => "oracle",
            StepMode::Emulate => "emulate",
        };
        write!(f, "{s}")
    }
}

/// Statistics of a failed witness search.
#[derive(Debug, Clone, Serialize)]
pub struct NoWitnessRecord {
    pub bound: usize,
    pub tried: u64,
    /// True when the bound was zero: only the empty sequence was searched.
    pub degenerate: bool,
}

/// One executed (or failed) machine step.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub machine: MachineKind,
    pub mode: Option<StepMode>,
    pub thread: u32,
    pub op: String,
    pub args: Vec<i64>,
    pub resp: Option<RespValue>,
    pub conflict_free: Option<bool>,
    pub evidence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_witness: Option<NoWitnessRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_before: Option<OracleMachineState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_after: Option<OracleMachineState>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    /// The history the machine generated, in execution order.
    pub history: History,
    pub spec_member: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceReport {
    pub scenario: String,
    pub machine: MachineKind,
    pub seed: u64,
    pub perturbations: usize,
    pub witness_bound: usize,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl TraceReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} / machine {} (seed {})",
            self.scenario, self.machine, self.seed
        );
        for s in &self.steps {
            let mode = s
                .mode
                .map(|m| m.to_string())
                .unwrap_or_else(|| "-".to_string());
            let resp = s
                .resp
                .as_ref()
                .map(|r| r.to_string())
                .unwrap_or_else(|| "-".to_string());
            let conflict = match s.conflict_free {
                Some(true) => "conflict-free",
                Some(false) => "conflicting",
                None => "-",
            };
            let _ = write!(
                out,
                "  step {}: t{} {}({}) -> {} [{} | {}]",
                s.step,
                s.thread,
                s.op,
                s.args
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
                resp,
                mode,
                conflict
            );
            if let Some(nw) = &s.no_witness {
                let _ = write!(
                    out,
                    " NO WITNESS (bound {}, tried {}{})",
                    nw.bound,
                    nw.tried,
                    if nw.degenerate { ", degenerate" } else { "" }
                );
            }
            if let Some(e) = &s.evidence {
                let _ = write!(out, " ({e})");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(
            out,
            "outcome: history {} | spec member: {}",
            self.outcome.history, self.outcome.spec_member
        );
        for f in &self.outcome.failures {
            let _ = writeln!(out, "failure: {f}");
        }
        out
    }
}

/// Result of a SIM-commutativity check.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub scenario: String,
    pub verdict: Verdict,
    pub witness: Option<CommutativityWitness>,
}

impl SimReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.verdict {
            Verdict::Commutes => {
                let _ = writeln!(out, "scenario {}: the region SIM-commutes", self.scenario);
            }
            Verdict::FailsToCommute => {
                let _ = writeln!(
                    out,
                    "scenario {}: the region FAILS to SIM-commute",
                    self.scenario
                );
                if let Some(w) = &self.witness {
                    let _ = writeln!(out, "  prefix     {}", w.prefix);
                    let _ = writeln!(out, "  reordered  {}", w.reordered);
                    let _ = writeln!(out, "  suffix     {}", w.suffix);
                    let _ = writeln!(
                        out,
                        "  membership {} vs {}",
                        w.original_member, w.reordered_member
                    );
                }
            }
        }
        out
    }
}

/// The first fuzz run that violated the specification, replayable as-is.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzViolation {
    pub run: usize,
    pub script: Vec<ScriptStep>,
    pub history: History,
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzSummary {
    pub scenario: String,
    pub machine: MachineKind,
    pub runs: usize,
    pub seed: u64,
    pub max_script_len: usize,
    pub total_steps: u64,
    pub violations: usize,
    pub first_violation: Option<FuzzViolation>,
}

impl FuzzSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}: {} fuzz runs (seed {}, scripts up to {} steps, {} total steps): {} violations",
            self.scenario, self.runs, self.seed, self.max_script_len, self.total_steps, self.violations
        );
        if let Some(v) = &self.first_violation {
            let _ = writeln!(out, "  first violation in run {}: {}", v.run, v.history);
        }
        out
    }
}

/// One named expectation checked by the counterexample command.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    /// True when the run matched every expectation for the chosen machine:
    /// the flawed machine ends in a failed exhaustive witness search, the
    /// revised machine completes the same script with a member history.
    pub reproduced: bool,
    pub checks: Vec<CheckRecord>,
    pub trace: TraceReport,
}

impl CounterexampleReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "[{}] {}", if c.pass { "ok" } else { "FAIL" }, c.name);
        }
        let _ = writeln!(
            out,
            "counterexample {}",
            if self.reproduced {
                "reproduced"
            } else {
                "NOT reproduced"
            }
        );
        out.push_str(&self.trace.to_text());
        out
    }
}
