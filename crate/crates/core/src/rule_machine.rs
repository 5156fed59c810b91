//! The original proof-construction machine, including the failure mode that
//! makes it unsound.
//!
//! The machine is built for one recorded history `X ⧺ Y` whose region `Y`
//! SIM-commutes. Each thread's replay list starts as
//! `X ⧺ [COMMUTE] ⧺ (Y|t)`. Replay mode returns recorded responses and
//! advances every thread's list in lockstep; consuming the `COMMUTE` marker
//! switches a thread to conflict-free mode, where only its own list advances.
//! On divergence the machine searches for a *witness* — an invocation
//! sequence that drives a fresh reference implementation to exhibit the
//! performed history — and then emulates through the reference
//! implementation.
//!
//! When a thread diverges after a prefix of a *reordering* of `Y` has been
//! performed, no witness may exist: the reference implementation can be
//! unable to exhibit the reordered prefix even though it satisfies the
//! specification. [`RuleStepError::NoWitness`] reports that outcome as data
//! rather than a crash; reproducing it is the point of this machine.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::history::{Action, History, Invocation, ThreadId};
use crate::openclose::{ref_exhibits, RefImplState, UnknownInvocation};
use crate::spec::sequences;

/// One entry of a thread's replay list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayEntry {
    /// Separates the shared `X` prefix from the thread's commutative region.
    Commute,
    Act(Action),
}

/// A thread's replay list, or the emulation sentinel that replaces every
/// list once the reference implementation takes over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayQueue {
    Pending(VecDeque<ReplayEntry>),
    Emulate,
}

/// Operating mode of one thread, derived from the machine state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleMode {
    Replay,
    ConflictFree,
    Emulate,
}

/// Result of the bounded exhaustive witness search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WitnessResult {
    /// The first invocation sequence (length, then lexicographic order) whose
    /// exhibited history starts with the target performed history.
    Found(Vec<(ThreadId, Invocation)>),
    NotFound {
        bound: usize,
        tried: u64,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleStepError {
    /// The witness search exhausted every invocation sequence up to `bound`
    /// without reproducing the performed history.
    #[error("no witness found for the performed history (bound {bound}, {tried} sequences tried)")]
    NoWitness { bound: usize, tried: u64 },
    #[error(transparent)]
    UnknownInvocation(#[from] UnknownInvocation),
}

/// The witness-search alphabet: every `(thread, invocation)` pair,
/// thread-major, invocations in declared order.
pub fn witness_alphabet(
    threads: &[ThreadId],
    invocations: &[Invocation],
) -> Vec<(ThreadId, Invocation)> {
    let mut out = Vec::with_capacity(threads.len() * invocations.len());
    for &t in threads {
        for i in invocations {
            out.push((t, i.clone()));
        }
    }
    out
}

/// Exhaustively searches invocation sequences up to length `bound` for one
/// whose exhibited history contains `target` as its exact leading sequence
/// (same responses, same order). Sequences are enumerated in length-then-
/// lexicographic order and the first hit wins, so a found witness exhibits
/// `target` exactly.
pub fn find_witness(
    target: &History,
    alphabet: &[(ThreadId, Invocation)],
    bound: usize,
) -> WitnessResult {
    let mut tried: u64 = 0;
    for seq in sequences(alphabet, bound) {
        tried += 1;
        if let Ok(exhibited) = ref_exhibits(&seq) {
            if exhibited.len() >= target.len()
                && exhibited.actions()[..target.len()] == *target.actions()
            {
                debug_assert_eq!(&exhibited, target, "first witness must be exact");
                return WitnessResult::Found(seq);
            }
        }
    }
    WitnessResult::NotFound { bound, tried }
}

/// State of the constructed machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMachineState {
    replay: BTreeMap<ThreadId, ReplayQueue>,
    commute: BTreeMap<ThreadId, bool>,
    refstate: RefImplState,
    /// The actions returned so far, in execution order. This is the recorded
    /// trace the witness search must reproduce on divergence.
    performed: History,
}

impl RuleMachineState {
    /// Builds the machine for history `X ⧺ Y`: each thread's replay list is
    /// `X ⧺ [COMMUTE] ⧺ (Y|t)`, commute flags clear, reference state initial.
    pub fn init(x: &History, y: &History, threads: &[ThreadId]) -> Self {
        let mut replay = BTreeMap::new();
        let mut commute = BTreeMap::new();
        for &t in threads {
            let mut queue: VecDeque<ReplayEntry> =
                x.iter().cloned().map(ReplayEntry::Act).collect();
            queue.push_back(ReplayEntry::Commute);
            queue.extend(y.restrict(t).iter().cloned().map(ReplayEntry::Act));
            replay.insert(t, ReplayQueue::Pending(queue));
            commute.insert(t, false);
        }
        RuleMachineState {
            replay,
            commute,
            refstate: RefImplState::new(),
            performed: History::new(),
        }
    }

    pub fn threads(&self) -> impl Iterator<Item = ThreadId> + '_ {
        self.replay.keys().copied()
    }

    pub fn queue(&self, t: ThreadId) -> &ReplayQueue {
        &self.replay[&t]
    }

    pub fn commute_flag(&self, t: ThreadId) -> bool {
        self.commute[&t]
    }

    pub fn ref_state(&self) -> &RefImplState {
        &self.refstate
    }

    pub fn performed(&self) -> &History {
        &self.performed
    }

    pub fn is_emulating(&self) -> bool {
        self.replay
            .values()
            .any(|q| matches!(q, ReplayQueue::Emulate))
    }

    pub(crate) fn set_ref_state(&mut self, refstate: RefImplState) {
        self.refstate = refstate;
    }

    pub(crate) fn set_commute_flag(&mut self, t: ThreadId, value: bool) {
        self.commute.insert(t, value);
    }

    pub(crate) fn set_queue(&mut self, t: ThreadId, queue: ReplayQueue) {
        self.replay.insert(t, queue);
    }

    /// The mode thread `t` currently operates in.
    pub fn mode_of(&self, t: ThreadId) -> RuleMode {
        match &self.replay[&t] {
            ReplayQueue::Emulate => RuleMode::Emulate,
            ReplayQueue::Pending(_) if self.commute[&t] => RuleMode::ConflictFree,
            ReplayQueue::Pending(_) => RuleMode::Replay,
        }
    }

    /// One machine step for invocation `i` by thread `t`.
    ///
    /// `alphabet` and `witness_bound` parameterize the witness search run on
    /// divergence. The step is a pure function: on `NoWitness` the caller's
    /// state is unchanged and may be retried with a larger bound.
    pub fn step(
        &self,
        t: ThreadId,
        i: &Invocation,
        alphabet: &[(ThreadId, Invocation)],
        witness_bound: usize,
    ) -> Result<(RuleMachineState, Action), RuleStepError> {
        let mut next = self.clone();

        if matches!(next.replay[&t], ReplayQueue::Emulate) {
            return next.emulate_step(t, i);
        }

        // Consume the COMMUTE marker: the thread enters conflict-free mode.
        if let ReplayQueue::Pending(queue) = next.replay.get_mut(&t).expect("known thread") {
            if queue.front() == Some(&ReplayEntry::Commute) {
                queue.pop_front();
                next.commute.insert(t, true);
            }
        }

        let matched = match &next.replay[&t] {
            ReplayQueue::Pending(queue) => match queue.front() {
                Some(ReplayEntry::Act(a)) if a.matches_call(t, i) => Some(a.clone()),
                _ => None,
            },
            ReplayQueue::Emulate => unreachable!("emulation handled above"),
        };

        match matched {
            Some(action) => {
                if next.commute[&t] {
                    // Conflict-free mode: advance only this thread's list.
                    if let ReplayQueue::Pending(queue) = next.replay.get_mut(&t).unwrap() {
                        queue.pop_front();
                    }
                } else {
                    // Replay mode: advance every thread's list in lockstep.
                    for queue in next.replay.values_mut() {
                        if let ReplayQueue::Pending(q) = queue {
                            q.pop_front();
                        }
                    }
                }
                next.performed.push(action.clone());
                Ok((next, action))
            }
            None => {
                // Divergence (or an exhausted list): find a witness for the
                // performed history and switch every thread to emulation.
                let witness = match find_witness(&self.performed, alphabet, witness_bound) {
                    WitnessResult::Found(seq) => seq,
                    WitnessResult::NotFound { bound, tried } => {
                        return Err(RuleStepError::NoWitness { bound, tried });
                    }
                };
                let mut refstate = RefImplState::new();
                for (_, inv) in &witness {
                    let (advanced, _) = refstate.step(inv)?;
                    refstate = advanced;
                }
                next.refstate = refstate;
                for queue in next.replay.values_mut() {
                    *queue = ReplayQueue::Emulate;
                }
                next.emulate_step(t, i)
            }
        }
    }

    fn emulate_step(
        mut self,
        t: ThreadId,
        i: &Invocation,
    ) -> Result<(RuleMachineState, Action), RuleStepError> {
        let (refstate, resp) = self.refstate.step(i)?;
        self.refstate = refstate;
        let action = Action::new(t, i.clone(), resp.into());
        self.performed.push(action.clone());
        Ok((self, action))
    }
}
