//! The revised constructed machine, driven by a specification oracle.
//!
//! Built for a history `X ⧺ Y` whose region `Y` SIM-commutes, the machine
//! replays `X` from a global copy, replays each `Y|t` from per-thread copies
//! in conflict-free mode, and on divergence switches permanently to oracle
//! mode: it rebuilds a history consistent with everything performed so far,
//! then returns the first declared response the oracle accepts.
//!
//! The mode is stored, not recomputed from `X_copy`: the transition into
//! conflict-free mode happens while replaying the final `X` action (or at
//! initialization when `X` is empty), so steps inside `Y` never write the
//! global mode and touch only the calling thread's state.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::history::{Action, History, Invocation, Response, ThreadId};
use crate::spec::{sim_commutes, CheckError, CommutativityReport, SearchBounds, SpecOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Replay,
    ConflictFree,
    Oracle,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleStepError {
    /// No declared response completes the performed history into a member;
    /// the finite response alphabet cannot serve this invocation here.
    #[error("no declared response satisfies the specification for {thread} {invocation}")]
    NoValidResponse {
        thread: ThreadId,
        invocation: Invocation,
    },
    #[error("invocation {invocation} is not in the oracle's alphabet")]
    UnknownInvocation { invocation: Invocation },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleInitError {
    #[error("the commutative region fails SIM commutativity under the configured bounds")]
    SimCommutativityRejected { report: CommutativityReport },
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Machine state: replay copies, performed lists, and the stored mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleMachineState {
    pub(crate) x_copy: History,
    pub(crate) y_copy: BTreeMap<ThreadId, History>,
    pub(crate) x_performed: History,
    pub(crate) y_performed: BTreeMap<ThreadId, History>,
    pub(crate) oracle_performed: History,
    pub(crate) mode: Mode,
}

impl OracleMachineState {
    /// Builds the machine state without checking the SIM-commutativity
    /// precondition. Use [`OracleMachineState::init`] on unvalidated input.
    pub fn init_unchecked(x: &History, y: &History, threads: &[ThreadId]) -> Self {
        let y_copy: BTreeMap<ThreadId, History> =
            threads.iter().map(|&t| (t, y.restrict(t))).collect();
        let y_performed: BTreeMap<ThreadId, History> =
            threads.iter().map(|&t| (t, History::new())).collect();
        OracleMachineState {
            x_copy: x.clone(),
            y_copy,
            x_performed: History::new(),
            y_performed,
            oracle_performed: History::new(),
            // With no X to replay the machine starts inside the commutative
            // region; entering conflict-free mode now keeps the mode flag
            // untouched by later per-thread steps.
            mode: if x.is_empty() {
                Mode::ConflictFree
            } else {
                Mode::Replay
            },
        }
    }

    /// Builds the machine state, first checking that `y` SIM-commutes in
    /// `x ⧺ y` under the given bounds.
    pub fn init(
        x: &History,
        y: &History,
        threads: &[ThreadId],
        oracle: &dyn SpecOracle,
        bounds: &SearchBounds,
    ) -> Result<Self, OracleInitError> {
        let report = sim_commutes(oracle, x, y, threads, bounds)?;
        if !report.commutes() {
            return Err(OracleInitError::SimCommutativityRejected { report });
        }
        Ok(Self::init_unchecked(x, y, threads))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn x_copy(&self) -> &History {
        &self.x_copy
    }

    pub fn x_performed(&self) -> &History {
        &self.x_performed
    }

    pub fn y_copy(&self, t: ThreadId) -> Option<&History> {
        self.y_copy.get(&t)
    }

    pub fn y_performed(&self, t: ThreadId) -> Option<&History> {
        self.y_performed.get(&t)
    }

    pub fn oracle_performed(&self) -> &History {
        &self.oracle_performed
    }

    pub fn threads(&self) -> impl Iterator<Item = ThreadId> + '_ {
        self.y_copy.keys().copied()
    }

    /// The history consistent with everything performed so far:
    /// `X_performed ⧺ Y_performed[t0] ⧺ … ⧺ Y_performed[tmax] ⧺
    /// oracle_performed`, threads ascending. SIM commutativity of `Y` makes
    /// any such concatenation order valid.
    pub fn oracle_history(&self) -> History {
        let mut h = self.x_performed.clone();
        for performed in self.y_performed.values() {
            h = h.concat(performed);
        }
        h.concat(&self.oracle_performed)
    }

    /// The mode that will govern a step `(t, i)` from this state: the stored
    /// mode, downgraded to oracle mode when the pending replay head does not
    /// match, and switching to conflict-free on the final `X` action.
    pub fn next_mode(&self, t: ThreadId, i: &Invocation) -> Mode {
        match self.mode {
            Mode::Oracle => Mode::Oracle,
            Mode::ConflictFree => match self.y_copy.get(&t).and_then(History::first) {
                Some(a) if a.matches_call(t, i) => Mode::ConflictFree,
                _ => Mode::Oracle,
            },
            Mode::Replay => match self.x_copy.first() {
                Some(a) if a.matches_call(t, i) => {
                    if self.x_copy.len() == 1 {
                        // Hand-off: replay the last X action and leave the
                        // machine in conflict-free mode.
                        Mode::ConflictFree
                    } else {
                        Mode::Replay
                    }
                }
                _ => Mode::Oracle,
            },
        }
    }

    /// One machine step: replay, conflict-free replay, or oracle response
    /// selection, per [`OracleMachineState::next_mode`].
    pub fn act(
        &self,
        t: ThreadId,
        i: &Invocation,
        oracle: &dyn SpecOracle,
    ) -> Result<(OracleMachineState, Action), OracleStepError> {
        match self.next_mode(t, i) {
            Mode::Oracle => {
                if !oracle.invocations().contains(i) {
                    return Err(OracleStepError::UnknownInvocation {
                        invocation: i.clone(),
                    });
                }
                let mut next = self.clone();
                next.mode = Mode::Oracle;
                let base = next.oracle_history();
                for r in oracle.responses() {
                    let action = Action::new(t, i.clone(), Response::Resp(r.clone()));
                    if oracle.is_member(&base.with_action(action.clone())) {
                        next.oracle_performed.push(action.clone());
                        return Ok((next, action));
                    }
                }
                Err(OracleStepError::NoValidResponse {
                    thread: t,
                    invocation: i.clone(),
                })
            }
            Mode::ConflictFree if self.mode == Mode::Replay => {
                // Final X action: replay bookkeeping, conflict-free mode out.
                let mut next = self.clone();
                let action = next.x_copy.pop_front().expect("matched head");
                next.x_performed.push(action.clone());
                next.mode = Mode::ConflictFree;
                Ok((next, action))
            }
            Mode::ConflictFree => {
                let mut next = self.clone();
                let action = next
                    .y_copy
                    .get_mut(&t)
                    .expect("matched head implies known thread")
                    .pop_front()
                    .expect("matched head");
                next.y_performed
                    .get_mut(&t)
                    .expect("known thread")
                    .push(action.clone());
                Ok((next, action))
            }
            Mode::Replay => {
                let mut next = self.clone();
                let action = next.x_copy.pop_front().expect("matched head");
                next.x_performed.push(action.clone());
                Ok((next, action))
            }
        }
    }
}
