//! Drives the machines over scenarios and assembles reports.

use scrlab_core::conflict::{conflict_free_step, rule_conflict_free_step};
use scrlab_core::history::{History, RespValue, Response, ThreadId};
use scrlab_core::oracle_machine::{Mode, OracleMachineState};
use scrlab_core::rng::SplitMix64;
use scrlab_core::rule_machine::{ReplayEntry, ReplayQueue, RuleMachineState, RuleMode, RuleStepError};
use scrlab_core::spec::SpecOracle;

use crate::report::{
    CheckRecord, CounterexampleReport, FuzzSummary, FuzzViolation, MachineKind, NoWitnessRecord,
    Outcome, SimReport, StepMode, StepRecord, TraceReport,
};
use crate::scenario::{Scenario, ScriptStep};

/// Fuzz scripts never exceed this many invocations.
pub const FUZZ_SCRIPT_MAX_LEN: usize = 8;

/// The bundled counterexample scenario, embedded so the command needs no
/// files on disk: a two-open commutative region, replayed out of order by
/// the second thread and then broken by a diverging `close(1)`.
pub fn bundled_counterexample() -> Scenario {
    Scenario::from_json(include_str!(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../scenarios/counterexample.json"
    )))
    .expect("bundled scenario is valid")
}

/// Runs the scenario's SIM-commutativity check.
pub fn check_sim(scenario: &Scenario) -> Result<SimReport, scrlab_core::spec::CheckError> {
    let oracle = scenario.oracle();
    let report = scrlab_core::spec::sim_commutes(
        &oracle,
        &scenario.x,
        &scenario.y,
        &scenario.thread_universe(),
        &scenario.bounds,
    )?;
    Ok(SimReport {
        scenario: scenario.name.clone(),
        verdict: report.verdict,
        witness: report.witness,
    })
}

fn rule_mode(mode: RuleMode) -> StepMode {
    match mode {
        RuleMode::Replay => StepMode::Replay,
        RuleMode::ConflictFree => StepMode::ConflictFree,
        RuleMode::Emulate => StepMode::Emulate,
    }
}

/// Drives the original construction over the scenario's input script. The
/// run stops at the first failed step; a failed witness search is recorded
/// with its statistics.
pub fn run_rule(scenario: &Scenario) -> TraceReport {
    let alphabet = scenario.witness_pairs();
    let threads = scenario.thread_universe();
    let oracle = scenario.oracle();
    let mut state = RuleMachineState::init(&scenario.x, &scenario.y, &threads);
    let mut steps = Vec::new();
    let mut failures = Vec::new();
    for (idx, (t, i)) in scenario.script().iter().enumerate() {
        match state.step(*t, i, &alphabet, scenario.witness_bound) {
            Ok((next, action)) => {
                let verdict = rule_conflict_free_step(
                    *t,
                    i,
                    &state,
                    &next,
                    &alphabet,
                    scenario.witness_bound,
                    scenario.perturbations,
                    scenario.seed.wrapping_add(idx as u64),
                );
                steps.push(StepRecord {
                    step: idx,
                    machine: MachineKind::Rule,
                    mode: Some(rule_mode(next.mode_of(*t))),
                    thread: t.0,
                    op: i.op.clone(),
                    args: i.args.clone(),
                    resp: action.response.value().cloned(),
                    conflict_free: Some(verdict.conflict_free()),
                    evidence: verdict.evidence,
                    no_witness: None,
                    state_before: None,
                    state_after: None,
                });
                state = next;
            }
            Err(RuleStepError::NoWitness { bound, tried }) => {
                steps.push(StepRecord {
                    step: idx,
                    machine: MachineKind::Rule,
                    mode: None,
                    thread: t.0,
                    op: i.op.clone(),
                    args: i.args.clone(),
                    resp: None,
                    conflict_free: None,
                    evidence: None,
                    no_witness: Some(NoWitnessRecord {
                        bound,
                        tried,
                        degenerate: bound == 0,
                    }),
                    state_before: None,
                    state_after: None,
                });
                failures.push(format!(
                    "step {idx}: no witness exhibits the performed history \
                     ({tried} invocation sequences tried up to length {bound})"
                ));
                break;
            }
            Err(e) => {
                failures.push(format!("step {idx}: {e}"));
                break;
            }
        }
    }
    let history = state.performed().clone();
    let spec_member = oracle.is_member(&history);
    TraceReport {
        scenario: scenario.name.clone(),
        machine: MachineKind::Rule,
        seed: scenario.seed,
        perturbations: scenario.perturbations,
        witness_bound: scenario.witness_bound,
        steps,
        outcome: Outcome {
            history,
            spec_member,
            failures,
        },
    }
}

/// Drives the oracle-based construction over the scenario's input script,
/// recording before/after state snapshots for conflict analysis.
pub fn run_oracle(scenario: &Scenario) -> TraceReport {
    let oracle = scenario.oracle();
    let threads = scenario.thread_universe();
    let mut state = OracleMachineState::init_unchecked(&scenario.x, &scenario.y, &threads);
    let mut steps = Vec::new();
    let mut failures = Vec::new();
    let mut history = History::new();
    for (idx, (t, i)) in scenario.script().iter().enumerate() {
        let mode = match state.next_mode(*t, i) {
            Mode::Oracle => StepMode::Oracle,
            _ if state.mode() == Mode::Replay => StepMode::Replay,
            _ => StepMode::ConflictFree,
        };
        match state.act(*t, i, &oracle) {
            Ok((next, action)) => {
                let verdict = conflict_free_step(
                    *t,
                    i,
                    &state,
                    &next,
                    &oracle,
                    scenario.perturbations,
                    scenario.seed.wrapping_add(idx as u64),
                );
                steps.push(StepRecord {
                    step: idx,
                    machine: MachineKind::Oracle,
                    mode: Some(mode),
                    thread: t.0,
                    op: i.op.clone(),
                    args: i.args.clone(),
                    resp: action.response.value().cloned(),
                    conflict_free: Some(verdict.conflict_free()),
                    evidence: verdict.evidence,
                    no_witness: None,
                    state_before: Some(state.clone()),
                    state_after: Some(next.clone()),
                });
                history.push(action);
                state = next;
            }
            Err(e) => {
                steps.push(StepRecord {
                    step: idx,
                    machine: MachineKind::Oracle,
                    mode: Some(mode),
                    thread: t.0,
                    op: i.op.clone(),
                    args: i.args.clone(),
                    resp: None,
                    conflict_free: None,
                    evidence: Some(e.to_string()),
                    no_witness: None,
                    state_before: Some(state.clone()),
                    state_after: None,
                });
                failures.push(format!("step {idx}: {e}"));
                break;
            }
        }
    }
    let spec_member = oracle.is_member(&history);
    TraceReport {
        scenario: scenario.name.clone(),
        machine: MachineKind::Oracle,
        seed: scenario.seed,
        perturbations: scenario.perturbations,
        witness_bound: scenario.witness_bound,
        steps,
        outcome: Outcome {
            history,
            spec_member,
            failures,
        },
    }
}

pub fn run_machine(scenario: &Scenario, machine: MachineKind) -> TraceReport {
    match machine {
        MachineKind::Rule => run_rule(scenario),
        MachineKind::Oracle => run_oracle(scenario),
    }
}

/// Success criterion for a trace: the flawed machine must never hit a failed
/// witness search; the oracle machine must finish with a member history.
pub fn trace_succeeded(report: &TraceReport) -> bool {
    match report.machine {
        MachineKind::Rule => report.outcome.failures.is_empty(),
        MachineKind::Oracle => {
            report.outcome.failures.is_empty() && report.outcome.spec_member
        }
    }
}

/// Fuzzes the oracle machine: seeded random scripts, invocation choices
/// restricted to calls the oracle deems valid after the history generated so
/// far. Every run's generated history must satisfy the specification.
pub fn fuzz(scenario: &Scenario, runs: usize) -> FuzzSummary {
    let oracle = scenario.oracle();
    let threads = scenario.thread_universe();
    let initial = OracleMachineState::init_unchecked(&scenario.x, &scenario.y, &threads);
    let mut rng = SplitMix64::new(scenario.seed);
    let mut total_steps: u64 = 0;
    let mut violations = 0usize;
    let mut first_violation: Option<FuzzViolation> = None;
    for run in 0..runs {
        let mut state = initial.clone();
        let mut history = History::new();
        let mut script: Vec<ScriptStep> = Vec::new();
        let mut failed = false;
        let len = rng.next_below(FUZZ_SCRIPT_MAX_LEN as u64 + 1) as usize;
        for _ in 0..len {
            let candidates: Vec<(ThreadId, scrlab_core::history::Invocation)> = threads
                .iter()
                .flat_map(|&t| oracle.invocations().iter().map(move |i| (t, i.clone())))
                .filter(|(t, i)| oracle.is_valid_invocation(&history, *t, i))
                .collect();
            if candidates.is_empty() {
                break;
            }
            let (t, i) = rng.choose(&candidates).clone();
            script.push(ScriptStep {
                thread: t.0,
                op: i.op.clone(),
                args: i.args.clone(),
            });
            match state.act(t, &i, &oracle) {
                Ok((next, action)) => {
                    total_steps += 1;
                    if action.response == Response::NoResp {
                        failed = true;
                        break;
                    }
                    history.push(action);
                    state = next;
                }
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed || !oracle.is_member(&history) {
            violations += 1;
            if first_violation.is_none() {
                first_violation = Some(FuzzViolation {
                    run,
                    script,
                    history,
                });
            }
        }
    }
    FuzzSummary {
        scenario: scenario.name.clone(),
        machine: MachineKind::Oracle,
        runs,
        seed: scenario.seed,
        max_script_len: FUZZ_SCRIPT_MAX_LEN,
        total_steps,
        violations,
        first_violation,
    }
}

fn check(checks: &mut Vec<CheckRecord>, name: &str, pass: bool) -> bool {
    checks.push(CheckRecord {
        name: name.to_string(),
        pass,
    });
    pass
}

/// Runs the bundled counterexample scenario and verifies the expected
/// behavior step by step.
///
/// Under the flawed machine the run must replay the out-of-order open
/// (returning descriptor 2), then fail its exhaustive witness search on the
/// diverging `close(1)`. Under the oracle machine the identical script must
/// complete with `2` then `EBADFD` and a spec-member history.
pub fn counterexample(scenario: &Scenario, machine: MachineKind) -> CounterexampleReport {
    let trace = run_machine(scenario, machine);
    let mut checks = Vec::new();
    let mut ok = true;
    match machine {
        MachineKind::Rule => {
            ok &= check(
                &mut checks,
                "out-of-order open replays descriptor 2 in conflict-free mode",
                trace.steps.first().is_some_and(|s| {
                    s.resp == Some(RespValue::Int(2)) && s.mode == Some(StepMode::ConflictFree)
                }),
            );
            ok &= check(
                &mut checks,
                "replay consumed only the calling thread's list",
                rule_intermediate_state_matches(scenario),
            );
            let no_witness = trace.steps.get(1).and_then(|s| s.no_witness.as_ref());
            ok &= check(
                &mut checks,
                "diverging close(1) ends with a failed witness search",
                no_witness.is_some(),
            );
            let pair_count = scenario.witness_pairs().len() as u64;
            let expected_tried: u64 = (0..=scenario.witness_bound as u32)
                .map(|l| pair_count.pow(l))
                .sum();
            ok &= check(
                &mut checks,
                "the search tried every invocation sequence up to the bound",
                no_witness.is_some_and(|nw| {
                    nw.bound == scenario.witness_bound && nw.tried == expected_tried
                }),
            );
            ok &= check(
                &mut checks,
                "the performed history satisfies the specification",
                trace.outcome.spec_member,
            );
        }
        MachineKind::Oracle => {
            ok &= check(
                &mut checks,
                "out-of-order open replays descriptor 2 in conflict-free mode",
                trace.steps.first().is_some_and(|s| {
                    s.resp == Some(RespValue::Int(2)) && s.mode == Some(StepMode::ConflictFree)
                }),
            );
            ok &= check(
                &mut checks,
                "diverging close(1) is answered EBADFD in oracle mode",
                trace.steps.get(1).is_some_and(|s| {
                    s.resp == Some(RespValue::code("EBADFD")) && s.mode == Some(StepMode::Oracle)
                }),
            );
            ok &= check(
                &mut checks,
                "the full generated history satisfies the specification",
                trace.outcome.spec_member && trace.outcome.failures.is_empty(),
            );
        }
    }
    CounterexampleReport {
        reproduced: ok,
        checks,
        trace,
    }
}

/// Re-drives the first counterexample step and checks the machine state the
/// run must pass through: the caller's replay list empty and in commute mode,
/// the other thread's list still holding its marker and region action.
fn rule_intermediate_state_matches(scenario: &Scenario) -> bool {
    let threads = scenario.thread_universe();
    let alphabet = scenario.witness_pairs();
    let state = RuleMachineState::init(&scenario.x, &scenario.y, &threads);
    let Some((t, i)) = scenario.script().first().cloned() else {
        return false;
    };
    let Ok((after, _)) = state.step(t, &i, &alphabet, scenario.witness_bound) else {
        return false;
    };
    let caller_done = after.queue(t) == &ReplayQueue::Pending(Default::default())
        && after.commute_flag(t);
    let others_untouched = threads.iter().filter(|&&u| u != t).all(|&u| {
        let mut expected: std::collections::VecDeque<ReplayEntry> =
            scenario.x.iter().cloned().map(ReplayEntry::Act).collect();
        expected.push_back(ReplayEntry::Commute);
        expected.extend(scenario.y.restrict(u).iter().cloned().map(ReplayEntry::Act));
        after.queue(u) == &ReplayQueue::Pending(expected) && !after.commute_flag(u)
    });
    caller_done && others_untouched
}
