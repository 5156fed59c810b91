//! Executable conflict-freedom checks.
//!
//! A machine step by thread `t` is conflict-free when its writes touch at
//! most `t`'s per-thread state (checked exactly by diffing state snapshots)
//! and its reads depend only on `t`'s per-thread state plus the mode
//! (approximated by re-running the step from perturbed states that agree
//! with the original on exactly those components).
//!
//! The write check is exact. The read check is sound for `false` verdicts —
//! a found perturbation is a genuine counterexample — and statistical for
//! `true` verdicts, so every verdict records the perturbation count used.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::history::{Action, History, Invocation, ThreadId};
use crate::openclose::RefImplState;
use crate::oracle_machine::OracleMachineState;
use crate::rng::SplitMix64;
use crate::rule_machine::{ReplayQueue, RuleMachineState};
use crate::spec::{action_alphabet, SpecOracle};

/// A set of thread ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct TidSet(pub BTreeSet<ThreadId>);

impl TidSet {
    pub fn empty() -> Self {
        TidSet(BTreeSet::new())
    }

    pub fn singleton(t: ThreadId) -> Self {
        TidSet(BTreeSet::from([t]))
    }

    pub fn contains(&self, t: ThreadId) -> bool {
        self.0.contains(&t)
    }

    pub fn is_subset_of_singleton(&self, t: ThreadId) -> bool {
        self.0.iter().all(|&u| u == t)
    }
}

impl fmt::Display for TidSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (idx, t) in self.0.iter().enumerate() {
            if idx > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

/// The threads whose entries differ between two per-thread history maps.
pub fn diff_histories_tid_set(
    m1: &BTreeMap<ThreadId, History>,
    m2: &BTreeMap<ThreadId, History>,
) -> TidSet {
    let mut out = BTreeSet::new();
    for t in m1.keys().chain(m2.keys()) {
        if m1.get(t) != m2.get(t) {
            out.insert(*t);
        }
    }
    TidSet(out)
}

/// The threads whose per-thread machine state (`Y_performed` or `Y_copy`)
/// differs between two states.
pub fn diff_states_tid_set(s1: &OracleMachineState, s2: &OracleMachineState) -> TidSet {
    let mut diff = diff_histories_tid_set(&s1.y_performed, &s2.y_performed);
    diff.0
        .extend(diff_histories_tid_set(&s1.y_copy, &s2.y_copy).0);
    diff
}

/// Result of one side of the conflict-freedom check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckOutcome {
    pub ok: bool,
    pub evidence: Option<String>,
}

impl CheckOutcome {
    fn pass() -> Self {
        CheckOutcome {
            ok: true,
            evidence: None,
        }
    }

    fn fail(evidence: impl Into<String>) -> Self {
        CheckOutcome {
            ok: false,
            evidence: Some(evidence.into()),
        }
    }
}

/// Combined verdict for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConflictVerdict {
    pub writes_ok: bool,
    pub reads_ok: bool,
    /// Description of the first violated clause, when any.
    pub evidence: Option<String>,
    /// Number of perturbed states the read check sampled.
    pub perturbations: usize,
}

impl ConflictVerdict {
    pub fn conflict_free(&self) -> bool {
        self.writes_ok && self.reads_ok
    }

    fn combine(writes: CheckOutcome, reads: CheckOutcome, perturbations: usize) -> Self {
        let evidence = writes.evidence.or(reads.evidence);
        ConflictVerdict {
            writes_ok: writes.ok,
            reads_ok: reads.ok,
            evidence,
            perturbations,
        }
    }
}

/// Exact write check: a step from `s1` to `s2` by `t` writes conflict-free
/// iff the global components (mode, `X_copy`, `X_performed`,
/// `oracle_performed`) are unchanged and the per-thread diff is at most
/// `{t}`. The empty diff passes: a step that changes nothing cannot conflict.
pub fn conflict_free_writes(
    t: ThreadId,
    s1: &OracleMachineState,
    s2: &OracleMachineState,
) -> CheckOutcome {
    if s1.mode != s2.mode {
        return CheckOutcome::fail(format!(
            "writes: global mode changed ({:?} -> {:?})",
            s1.mode, s2.mode
        ));
    }
    if s1.x_copy != s2.x_copy {
        return CheckOutcome::fail("writes: global X_copy changed");
    }
    if s1.x_performed != s2.x_performed {
        return CheckOutcome::fail("writes: global X_performed changed");
    }
    if s1.oracle_performed != s2.oracle_performed {
        return CheckOutcome::fail("writes: global oracle_performed changed");
    }
    let diff = diff_states_tid_set(s1, s2);
    if diff.is_subset_of_singleton(t) {
        CheckOutcome::pass()
    } else {
        CheckOutcome::fail(format!(
            "writes: per-thread state of {diff} changed on a step by {t}"
        ))
    }
}

/// The mutable components a read-check perturbation may rewrite: everything
/// except thread `t`'s `Y` state and the mode.
enum PerturbTarget {
    XCopy,
    XPerformed,
    OraclePerformed,
    YCopy(ThreadId),
    YPerformed(ThreadId),
}

fn perturb_targets(s: &OracleMachineState, t: ThreadId) -> Vec<PerturbTarget> {
    let mut targets = vec![
        PerturbTarget::XCopy,
        PerturbTarget::XPerformed,
        PerturbTarget::OraclePerformed,
    ];
    for u in s.threads() {
        if u != t {
            targets.push(PerturbTarget::YCopy(u));
            targets.push(PerturbTarget::YPerformed(u));
        }
    }
    targets
}

fn apply_perturbation(s: &OracleMachineState, target: &PerturbTarget, content: History) -> OracleMachineState {
    let mut out = s.clone();
    match target {
        PerturbTarget::XCopy => out.x_copy = content,
        PerturbTarget::XPerformed => out.x_performed = content,
        PerturbTarget::OraclePerformed => out.oracle_performed = content,
        PerturbTarget::YCopy(u) => {
            out.y_copy.insert(*u, content);
        }
        PerturbTarget::YPerformed(u) => {
            out.y_performed.insert(*u, content);
        }
    }
    out
}

/// The `k`-th perturbation of `s` for a step by `t`.
///
/// Early perturbations sweep each component through the empty history and
/// every single-action history over the alphabet; later ones fill a random
/// component with a short random action sequence. All draws come from the
/// seeded generator, so sweeps reproduce exactly.
fn perturbed_state(
    s: &OracleMachineState,
    t: ThreadId,
    alphabet: &[Action],
    k: usize,
    rng: &mut SplitMix64,
) -> OracleMachineState {
    let targets = perturb_targets(s, t);
    let structured = targets.len() * (1 + alphabet.len());
    if k < structured {
        let target = &targets[k % targets.len()];
        let variant = k / targets.len();
        let content = if variant == 0 {
            History::new()
        } else {
            History::from_actions([alphabet[variant - 1].clone()])
        };
        apply_perturbation(s, target, content)
    } else {
        let target = &targets[rng.next_below(targets.len() as u64) as usize];
        let len = rng.next_below(4) as usize;
        let content: History = (0..len).map(|_| rng.choose(alphabet).clone()).collect();
        apply_perturbation(s, target, content)
    }
}

fn describe_outcome(
    result: &Result<(OracleMachineState, Action), crate::oracle_machine::OracleStepError>,
) -> String {
    match result {
        Ok((state, action)) => format!("{action} (post mode {:?})", state.mode),
        Err(e) => format!("error: {e}"),
    }
}

/// Perturbation-based read check: re-runs the step `(t, i)` from states that
/// agree with `s` on `Y_copy[t]`, `Y_performed[t]`, and the mode, but vary
/// every other component. Passes iff every run returns the identical action
/// and both post-states keep the mode of `s`.
pub fn conflict_free_reads(
    t: ThreadId,
    i: &Invocation,
    s: &OracleMachineState,
    oracle: &dyn SpecOracle,
    perturbations: usize,
    seed: u64,
) -> CheckOutcome {
    let threads: Vec<ThreadId> = s.threads().collect();
    let alphabet = action_alphabet(oracle, &threads);
    let base = s.act(t, i, oracle);
    let (base_action, base_mode) = match &base {
        Ok((state, action)) => (action.clone(), state.mode),
        Err(e) => return CheckOutcome::fail(format!("reads: base step failed: {e}")),
    };
    if base_mode != s.mode {
        return CheckOutcome::fail(format!(
            "reads: step changed the mode ({:?} -> {:?})",
            s.mode, base_mode
        ));
    }
    let mut rng = SplitMix64::new(seed);
    for k in 0..perturbations {
        let candidate = perturbed_state(s, t, &alphabet, k, &mut rng);
        let outcome = candidate.act(t, i, oracle);
        let agrees = match &outcome {
            Ok((state, action)) => *action == base_action && state.mode == s.mode,
            Err(_) => false,
        };
        if !agrees {
            return CheckOutcome::fail(format!(
                "reads: perturbation {k} produced {} (expected {base_action} with mode {:?})",
                describe_outcome(&outcome),
                s.mode,
            ));
        }
    }
    CheckOutcome::pass()
}

/// Full conflict-freedom verdict for a step `s1 -> s2` by `(t, i)`, where
/// `s2` must be the post-state of `s1.act(t, i, oracle)`.
pub fn conflict_free_step(
    t: ThreadId,
    i: &Invocation,
    s1: &OracleMachineState,
    s2: &OracleMachineState,
    oracle: &dyn SpecOracle,
    perturbations: usize,
    seed: u64,
) -> ConflictVerdict {
    let writes = conflict_free_writes(t, s1, s2);
    let reads = conflict_free_reads(t, i, s1, oracle, perturbations, seed);
    ConflictVerdict::combine(writes, reads, perturbations)
}

/// Conflict analysis of the reference implementation under the analogous
/// partition: `gfd` and `closed` are global components and there is no
/// per-thread state at all, so any state change is a conflicting write and
/// any state-dependent response is a conflicting read.
pub fn ref_conflict_free_step(
    i: &Invocation,
    s: &RefImplState,
    fd_bound: i64,
    perturbations: usize,
    seed: u64,
) -> ConflictVerdict {
    let base = match s.step(i) {
        Ok(pair) => pair,
        Err(e) => {
            return ConflictVerdict::combine(
                CheckOutcome::fail(format!("writes: base step failed: {e}")),
                CheckOutcome::fail("reads: base step failed"),
                perturbations,
            )
        }
    };
    let writes = if base.0 == *s {
        CheckOutcome::pass()
    } else {
        CheckOutcome::fail("writes: global gfd/closed state changed")
    };

    // Structured sweep over small states, then random fills.
    let mut candidates: Vec<RefImplState> = Vec::new();
    for gfd in 0..=fd_bound + 1 {
        let subsets = 1u64 << fd_bound.clamp(0, 16);
        for mask in 0..subsets {
            let closed: BTreeSet<i64> =
                (1..=fd_bound).filter(|fd| mask & (1 << (fd - 1)) != 0).collect();
            if closed.iter().all(|&fd| fd <= gfd) {
                candidates.push(RefImplState { gfd, closed });
            }
        }
    }
    let mut rng = SplitMix64::new(seed);
    let mut reads = CheckOutcome::pass();
    for k in 0..perturbations {
        let candidate = if k < candidates.len() {
            candidates[k].clone()
        } else {
            let gfd = rng.next_below((fd_bound as u64 + 2).max(1)) as i64;
            let closed: BTreeSet<i64> = (1..=gfd)
                .filter(|_| rng.next_below(2) == 1)
                .collect();
            RefImplState { gfd, closed }
        };
        match candidate.step(i) {
            Ok((_, resp)) if resp == base.1 => {}
            Ok((_, resp)) => {
                reads = CheckOutcome::fail(format!(
                    "reads: perturbation {k} (gfd={}, closed={:?}) produced {resp:?} (expected {:?})",
                    candidate.gfd, candidate.closed, base.1
                ));
                break;
            }
            Err(e) => {
                reads = CheckOutcome::fail(format!("reads: perturbation {k} failed: {e}"));
                break;
            }
        }
    }
    ConflictVerdict::combine(writes, reads, perturbations)
}

/// Conflict analysis of the original construction under the analogous
/// partition: each thread owns its replay list and commute flag, while the
/// reference state is global; the performed-action log is the recorded trace
/// rather than machine state and is excluded.
#[allow(clippy::too_many_arguments)]
pub fn rule_conflict_free_step(
    t: ThreadId,
    i: &Invocation,
    s1: &RuleMachineState,
    s2: &RuleMachineState,
    alphabet: &[(ThreadId, Invocation)],
    witness_bound: usize,
    perturbations: usize,
    seed: u64,
) -> ConflictVerdict {
    let mut writes = CheckOutcome::pass();
    if s1.ref_state() != s2.ref_state() {
        writes = CheckOutcome::fail("writes: global reference state changed");
    } else {
        for u in s1.threads() {
            if u == t {
                continue;
            }
            if s1.queue(u) != s2.queue(u) || s1.commute_flag(u) != s2.commute_flag(u) {
                writes =
                    CheckOutcome::fail(format!("writes: state of {u} changed on a step by {t}"));
                break;
            }
        }
    }

    let base = match s1.step(t, i, alphabet, witness_bound) {
        Ok((_, action)) => action,
        Err(e) => {
            return ConflictVerdict::combine(
                writes,
                CheckOutcome::fail(format!("reads: base step failed: {e}")),
                perturbations,
            )
        }
    };
    let mut rng = SplitMix64::new(seed);
    let mut reads = CheckOutcome::pass();
    for k in 0..perturbations {
        let candidate = perturbed_rule_state(s1, t, k, &mut rng);
        let agrees = matches!(
            candidate.step(t, i, alphabet, witness_bound),
            Ok((_, ref action)) if *action == base
        );
        if !agrees {
            reads = CheckOutcome::fail(format!(
                "reads: perturbation {k} changed the response (expected {base})"
            ));
            break;
        }
    }
    ConflictVerdict::combine(writes, reads, perturbations)
}

/// Perturbs everything a rule-machine step by `t` must not read: the global
/// reference state plus other threads' replay lists and commute flags.
fn perturbed_rule_state(
    s: &RuleMachineState,
    t: ThreadId,
    k: usize,
    rng: &mut SplitMix64,
) -> RuleMachineState {
    let others: Vec<ThreadId> = s.threads().filter(|&u| u != t).collect();
    let mut out = s.clone();
    match k % 3 {
        0 => {
            // Reference-state sweep: small counter values and closed sets.
            let gfd = (k as i64 / 3) % 5;
            let closed: BTreeSet<i64> = (1..=gfd).filter(|_| rng.next_below(2) == 1).collect();
            out.set_ref_state(RefImplState { gfd, closed });
        }
        1 if !others.is_empty() => {
            let u = others[(k / 3) % others.len()];
            out.set_commute_flag(u, rng.next_below(2) == 1);
        }
        _ if !others.is_empty() => {
            let u = others[(k / 3) % others.len()];
            match s.queue(u) {
                ReplayQueue::Pending(entries) => {
                    let keep = if entries.is_empty() {
                        0
                    } else {
                        rng.next_below(entries.len() as u64) as usize
                    };
                    let truncated: std::collections::VecDeque<_> =
                        entries.iter().take(keep).cloned().collect();
                    out.set_queue(u, ReplayQueue::Pending(truncated));
                }
                ReplayQueue::Emulate => {}
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::Response;
    use crate::openclose::{close_invocation, oc_oracle, open_invocation, OcResponse};

    fn tid(t: u32) -> ThreadId {
        ThreadId(t)
    }

    fn open_act(t: u32, fd: i64) -> Action {
        Action::new(tid(t), open_invocation(), Response::int(fd))
    }

    fn close_act(t: u32, fd: i64, resp: OcResponse) -> Action {
        Action::new(tid(t), close_invocation(fd), resp.into())
    }

    fn h_commute() -> History {
        History::from_actions([open_act(0, 1), open_act(1, 2)])
    }

    fn fresh_machine() -> OracleMachineState {
        OracleMachineState::init_unchecked(&History::new(), &h_commute(), &ThreadId::universe(2))
    }

    #[test]
    fn diff_histories_examples() {
        let base: BTreeMap<ThreadId, History> = [
            (tid(0), History::from_actions([open_act(0, 1)])),
            (tid(1), History::new()),
        ]
        .into();
        assert_eq!(diff_histories_tid_set(&base, &base), TidSet::empty());

        let mut beta_changed = base.clone();
        beta_changed.insert(tid(1), History::from_actions([open_act(1, 2)]));
        assert_eq!(
            diff_histories_tid_set(&base, &beta_changed),
            TidSet::singleton(tid(1))
        );

        let mut both_changed = beta_changed.clone();
        both_changed.insert(tid(0), History::new());
        assert_eq!(
            diff_histories_tid_set(&base, &both_changed),
            TidSet(BTreeSet::from([tid(0), tid(1)]))
        );
    }

    #[test]
    fn diff_states_on_conflict_free_step() {
        let oracle = oc_oracle(3);
        let s1 = fresh_machine();
        assert_eq!(diff_states_tid_set(&s1, &s1), TidSet::empty());
        let (s2, _) = s1.act(tid(1), &open_invocation(), &oracle).unwrap();
        assert_eq!(diff_states_tid_set(&s1, &s2), TidSet::singleton(tid(1)));
    }

    #[test]
    fn conflict_free_step_in_commutative_region() {
        let oracle = oc_oracle(3);
        let s1 = fresh_machine();
        let (s2, _) = s1.act(tid(1), &open_invocation(), &oracle).unwrap();
        let verdict =
            conflict_free_step(tid(1), &open_invocation(), &s1, &s2, &oracle, 100, 0xA5A5);
        assert!(verdict.writes_ok, "evidence: {:?}", verdict.evidence);
        assert!(verdict.reads_ok, "evidence: {:?}", verdict.evidence);
        assert!(verdict.conflict_free());
        assert_eq!(verdict.perturbations, 100);
    }

    #[test]
    fn identity_step_has_empty_diff_and_passes_writes() {
        let s = fresh_machine();
        let outcome = conflict_free_writes(tid(0), &s, &s);
        assert!(outcome.ok);
    }

    #[test]
    fn oracle_step_fails_writes() {
        let oracle = oc_oracle(3);
        let s1 = fresh_machine();
        let (s1, _) = s1.act(tid(1), &open_invocation(), &oracle).unwrap();
        let (s2, _) = s1.act(tid(0), &close_invocation(1), &oracle).unwrap();
        let outcome = conflict_free_writes(tid(0), &s1, &s2);
        assert!(!outcome.ok);
        let verdict =
            conflict_free_step(tid(0), &close_invocation(1), &s1, &s2, &oracle, 50, 0xA5A5);
        assert!(!verdict.conflict_free());
        assert!(!verdict.writes_ok);
    }

    #[test]
    fn oracle_step_reads_depend_on_x_performed() {
        let oracle = oc_oracle(3);
        let s1 = fresh_machine();
        let (s1, _) = s1.act(tid(1), &open_invocation(), &oracle).unwrap();
        // The close(1) answer flips from EBADFD to OK once a perturbation
        // plants an open of fd 1 in X_performed.
        let outcome = conflict_free_reads(tid(0), &close_invocation(1), &s1, &oracle, 100, 7);
        assert!(!outcome.ok);
        let direct = apply_perturbation(
            &s1,
            &PerturbTarget::XPerformed,
            History::from_actions([open_act(0, 1)]),
        );
        let (_, action) = direct.act(tid(0), &close_invocation(1), &oracle).unwrap();
        assert_eq!(action, close_act(0, 1, OcResponse::Ok));
    }

    #[test]
    fn single_thread_conflict_free_step_passes() {
        let oracle = oc_oracle(3);
        let y = History::from_actions([open_act(0, 1)]);
        let s1 = OracleMachineState::init_unchecked(&History::new(), &y, &ThreadId::universe(1));
        let (s2, _) = s1.act(tid(0), &open_invocation(), &oracle).unwrap();
        let verdict =
            conflict_free_step(tid(0), &open_invocation(), &s1, &s2, &oracle, 60, 0xBEEF);
        assert!(verdict.conflict_free(), "evidence: {:?}", verdict.evidence);
    }

    #[test]
    fn reference_implementation_steps_conflict() {
        let oracle = oc_oracle(3);
        // Every alphabet invocation conflicts from every small start state.
        let states = [
            RefImplState::new(),
            RefImplState {
                gfd: 2,
                closed: BTreeSet::from([1]),
            },
        ];
        for s in &states {
            for i in oracle.invocations() {
                let verdict = ref_conflict_free_step(i, s, 3, 64, 0x5EED);
                assert!(
                    !verdict.conflict_free(),
                    "expected conflict for {i} from {s:?}"
                );
            }
        }
    }

    #[test]
    fn rule_machine_conflict_free_mode_step_passes() {
        use crate::rule_machine::witness_alphabet;
        let alphabet = witness_alphabet(&ThreadId::universe(2), oc_oracle(3).invocations());
        let s1 = RuleMachineState::init(&History::new(), &h_commute(), &ThreadId::universe(2));
        let (s2, _) = s1.step(tid(1), &open_invocation(), &alphabet, 4).unwrap();
        let verdict = rule_conflict_free_step(
            tid(1),
            &open_invocation(),
            &s1,
            &s2,
            &alphabet,
            4,
            60,
            0xD00D,
        );
        assert!(verdict.conflict_free(), "evidence: {:?}", verdict.evidence);
    }

    #[test]
    fn rule_machine_replay_step_fails_writes() {
        use crate::rule_machine::witness_alphabet;
        let alphabet = witness_alphabet(&ThreadId::universe(2), oc_oracle(3).invocations());
        let x = History::from_actions([open_act(0, 1), open_act(1, 2)]);
        let s1 = RuleMachineState::init(&x, &History::new(), &ThreadId::universe(2));
        let (s2, _) = s1.step(tid(0), &open_invocation(), &alphabet, 4).unwrap();
        let verdict = rule_conflict_free_step(
            tid(0),
            &open_invocation(),
            &s1,
            &s2,
            &alphabet,
            4,
            30,
            0xD00D,
        );
        assert!(!verdict.writes_ok);
    }
}
