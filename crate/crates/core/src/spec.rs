//! Specification oracles and brute-force commutativity checkers.
//!
//! A specification is a prefix-closed set of histories. A [`SpecOracle`]
//! answers membership, enumerates the finite invocation and response
//! alphabets, and classifies which invocations are valid to call after a
//! given history.
//!
//! The checkers make the commutativity definitions finitely decidable:
//! an action sequence `Y` SI-commutes in `X ⧺ Y` when swapping `Y` for any
//! reordering `Y'` is invisible to membership under every future suffix `Z`;
//! `Y` SIM-commutes when every prefix of every reordering of `Y` SI-commutes
//! in turn. Suffixes are drawn from the oracle's declared alphabets across
//! the scenario's threads, in deterministic (length, then lexicographic)
//! order so the first failure witness is reproducible.

use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::history::{
    Action, History, HistoryError, Invocation, RespValue, Response, ThreadId, ENUMERATION_BOUND,
};

/// Membership predicate plus the finite alphabets that make the
/// commutativity quantifiers checkable.
pub trait SpecOracle {
    /// True iff `h` belongs to the specification.
    fn is_member(&self, h: &History) -> bool;

    /// Every possible response value, in a fixed documented order.
    ///
    /// The constructed machine iterates candidates in exactly this order, so
    /// the order is part of an oracle's observable contract.
    fn responses(&self) -> &[RespValue];

    /// The invocation alphabet used for suffix and witness enumeration.
    fn invocations(&self) -> &[Invocation];

    /// True iff `i` is valid for thread `t` to call after `h`, with at least
    /// one valid response available in the declared response alphabet.
    fn is_valid_invocation(&self, h: &History, t: ThreadId, i: &Invocation) -> bool;
}

/// `O_SPEC(H)`: total, deterministic membership query.
pub fn oracle_query(oracle: &dyn SpecOracle, h: &History) -> bool {
    oracle.is_member(h)
}

/// Membership of `h ⧺ [(t, i, NoResp)]`, the pending-invocation query form.
pub fn pending_query(oracle: &dyn SpecOracle, h: &History, t: ThreadId, i: &Invocation) -> bool {
    oracle.is_member(&h.with_action(Action::new(t, i.clone(), Response::NoResp)))
}

/// Finite search bounds for the commutativity checkers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SearchBounds {
    /// Maximum length of the commutative region `Y`.
    pub max_region_len: usize,
    /// Maximum length of enumerated suffixes `Z`.
    pub max_suffix_len: usize,
}

impl SearchBounds {
    pub fn new(max_region_len: usize, max_suffix_len: usize) -> Self {
        Self {
            max_region_len,
            max_suffix_len,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("enumeration length {len} exceeds the configured bound {bound}")]
    BoundExceeded { len: usize, bound: usize },
}

impl From<HistoryError> for CheckError {
    fn from(e: HistoryError) -> Self {
        match e {
            HistoryError::BoundExceeded { len, bound } => CheckError::BoundExceeded { len, bound },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Commutes,
    FailsToCommute,
}

/// Replayable evidence for a failed commutativity check: a prefix `P` of some
/// reordering of `Y`, a reordering `P'` of `P`, and a suffix `Z` on which the
/// two membership queries disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommutativityWitness {
    pub prefix: History,
    pub reordered: History,
    pub suffix: History,
    pub original_member: bool,
    pub reordered_member: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommutativityReport {
    pub verdict: Verdict,
    pub witness: Option<CommutativityWitness>,
}

impl CommutativityReport {
    pub fn commutes(&self) -> bool {
        self.verdict == Verdict::Commutes
    }

    fn pass() -> Self {
        CommutativityReport {
            verdict: Verdict::Commutes,
            witness: None,
        }
    }

    fn fail(witness: CommutativityWitness) -> Self {
        CommutativityReport {
            verdict: Verdict::FailsToCommute,
            witness: Some(witness),
        }
    }
}

/// All sequences over `alphabet` of length `0..=max_len`, in length-then-
/// lexicographic order (lexicographic by alphabet index).
pub fn sequences<T: Clone>(alphabet: &[T], max_len: usize) -> Sequences<'_, T> {
    Sequences {
        alphabet,
        max_len,
        odometer: Some(Vec::new()),
    }
}

pub struct Sequences<'a, T> {
    alphabet: &'a [T],
    max_len: usize,
    odometer: Option<Vec<usize>>,
}

impl<T: Clone> Iterator for Sequences<'_, T> {
    type Item = Vec<T>;

    fn next(&mut self) -> Option<Vec<T>> {
        let odometer = self.odometer.as_mut()?;
        let item: Vec<T> = odometer
            .iter()
            .map(|&i| self.alphabet[i].clone())
            .collect();
        // Advance: rightmost digit first, carrying left; on overflow grow by
        // one digit until max_len is exhausted.
        let mut pos = odometer.len();
        loop {
            if pos == 0 {
                let next_len = odometer.len() + 1;
                if next_len > self.max_len || self.alphabet.is_empty() {
                    self.odometer = None;
                } else {
                    *odometer = vec![0; next_len];
                }
                break;
            }
            pos -= 1;
            odometer[pos] += 1;
            if odometer[pos] < self.alphabet.len() {
                break;
            }
            odometer[pos] = 0;
        }
        Some(item)
    }
}

/// The full action alphabet `threads × invocations × responses`, ordered
/// thread-major, then invocation, then response (all in declared order).
pub fn action_alphabet(oracle: &dyn SpecOracle, threads: &[ThreadId]) -> Vec<Action> {
    let mut out = Vec::new();
    for &t in threads {
        for i in oracle.invocations() {
            for r in oracle.responses() {
                out.push(Action::new(t, i.clone(), Response::Resp(r.clone())));
            }
        }
    }
    out
}

/// Checks that `y` SI-commutes in `x ⧺ y`: every reordering of `y` is
/// indistinguishable from `y` by membership under every bounded suffix.
pub fn si_commutes(
    oracle: &dyn SpecOracle,
    x: &History,
    y: &History,
    threads: &[ThreadId],
    bounds: &SearchBounds,
) -> Result<CommutativityReport, CheckError> {
    if y.len() > bounds.max_region_len {
        return Err(CheckError::BoundExceeded {
            len: y.len(),
            bound: bounds.max_region_len,
        });
    }
    let reorderings = y.reorderings()?;
    if reorderings.len() == 1 {
        // The only reordering of y is y itself.
        return Ok(CommutativityReport::pass());
    }
    let alphabet = action_alphabet(oracle, threads);
    let suffixes: Vec<History> = sequences(&alphabet, bounds.max_suffix_len)
        .map(History::from_actions)
        .collect();
    let base = x.concat(y);
    let base_member: Vec<bool> = suffixes
        .iter()
        .map(|z| oracle.is_member(&base.concat(z)))
        .collect();
    for reordered in &reorderings {
        if reordered == y {
            continue;
        }
        let candidate = x.concat(reordered);
        for (zi, z) in suffixes.iter().enumerate() {
            let reordered_member = oracle.is_member(&candidate.concat(z));
            if reordered_member != base_member[zi] {
                return Ok(CommutativityReport::fail(CommutativityWitness {
                    prefix: y.clone(),
                    reordered: reordered.clone(),
                    suffix: z.clone(),
                    original_member: base_member[zi],
                    reordered_member,
                }));
            }
        }
    }
    Ok(CommutativityReport::pass())
}

/// Checks that `y` SIM-commutes in `x ⧺ y`: every prefix of every reordering
/// of `y` SI-commutes after `x`.
pub fn sim_commutes(
    oracle: &dyn SpecOracle,
    x: &History,
    y: &History,
    threads: &[ThreadId],
    bounds: &SearchBounds,
) -> Result<CommutativityReport, CheckError> {
    if y.len() > bounds.max_region_len {
        return Err(CheckError::BoundExceeded {
            len: y.len(),
            bound: bounds.max_region_len,
        });
    }
    let mut seen: HashSet<History> = HashSet::new();
    for reordering in y.reorderings()? {
        for prefix in reordering.prefixes() {
            if !seen.insert(prefix.clone()) {
                continue;
            }
            let report = si_commutes(oracle, x, &prefix, threads, bounds)?;
            if !report.commutes() {
                return Ok(report);
            }
        }
    }
    Ok(CommutativityReport::pass())
}

/// Witness of a prefix-closure violation: a member history whose immediate
/// prefix is not a member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefixClosureWitness {
    pub member: History,
    pub non_member_prefix: History,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefixClosureReport {
    pub closed: bool,
    pub witness: Option<PrefixClosureWitness>,
}

/// Exhaustively checks prefix closure over all alphabet histories up to
/// `max_len`. Checking each history's immediate prefix suffices because every
/// shorter history is itself enumerated.
pub fn check_prefix_closed(
    oracle: &dyn SpecOracle,
    threads: &[ThreadId],
    max_len: usize,
) -> Result<PrefixClosureReport, CheckError> {
    if max_len > ENUMERATION_BOUND {
        return Err(CheckError::BoundExceeded {
            len: max_len,
            bound: ENUMERATION_BOUND,
        });
    }
    let alphabet = action_alphabet(oracle, threads);
    for seq in sequences(&alphabet, max_len) {
        if seq.is_empty() {
            continue;
        }
        let h = History::from_actions(seq);
        if oracle.is_member(&h) {
            let prefix: History = h.actions()[..h.len() - 1].iter().cloned().collect();
            if !oracle.is_member(&prefix) {
                return Ok(PrefixClosureReport {
                    closed: false,
                    witness: Some(PrefixClosureWitness {
                        member: h,
                        non_member_prefix: prefix,
                    }),
                });
            }
        }
    }
    Ok(PrefixClosureReport {
        closed: true,
        witness: None,
    })
}
