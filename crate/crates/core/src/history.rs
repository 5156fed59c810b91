//! Actions and histories.
//!
//! An [`Action`] is one completed operation: a thread id, an invocation, and
//! the response it received. A [`History`] is a chronological sequence of
//! actions (index 0 is earliest). Everything downstream — the specification
//! checkers, both constructed machines, and the conflict analysis — is defined
//! over these two types.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum history length accepted by the brute-force enumerators.
///
/// 8! = 40320 interleavings keeps exhaustive suites well under a second.
pub const ENUMERATION_BOUND: usize = 8;

/// Identifies the thread that issued an invocation.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ThreadId(pub u32);

impl ThreadId {
    /// The ascending thread universe `0..count` used by scenarios.
    pub fn universe(count: u32) -> Vec<ThreadId> {
        (0..count).map(ThreadId).collect()
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// An operation call: symbolic operation name plus integer arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Invocation {
    pub op: String,
    pub args: Vec<i64>,
}

impl Invocation {
    pub fn new(op: impl Into<String>, args: impl IntoIterator<Item = i64>) -> Self {
        Self {
            op: op.into(),
            args: args.into_iter().collect(),
        }
    }

    /// Zero-argument invocation.
    pub fn nullary(op: impl Into<String>) -> Self {
        Self::new(op, [])
    }
}

impl fmt::Display for Invocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.op)?;
        for (idx, a) in self.args.iter().enumerate() {
            if idx > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// A concrete return value: an integer or a symbolic code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RespValue {
    Int(i64),
    Code(String),
}

impl RespValue {
    pub fn code(c: impl Into<String>) -> Self {
        RespValue::Code(c.into())
    }
}

impl fmt::Display for RespValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RespValue::Int(v) => write!(f, "{v}"),
            RespValue::Code(c) => write!(f, "{c}"),
        }
    }
}

/// Response slot of an action.
///
/// `NoResp` marks a pending invocation and is only legal in spec-membership
/// queries; completed histories never store it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Response {
    NoResp,
    Resp(RespValue),
}

impl Response {
    pub fn int(v: i64) -> Self {
        Response::Resp(RespValue::Int(v))
    }

    pub fn code(c: impl Into<String>) -> Self {
        Response::Resp(RespValue::code(c))
    }

    pub fn is_pending(&self) -> bool {
        matches!(self, Response::NoResp)
    }

    pub fn value(&self) -> Option<&RespValue> {
        match self {
            Response::NoResp => None,
            Response::Resp(v) => Some(v),
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::NoResp => write!(f, "?"),
            Response::Resp(v) => write!(f, "{v}"),
        }
    }
}

/// One completed operation: `(thread, invocation, response)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub thread: ThreadId,
    pub invocation: Invocation,
    pub response: Response,
}

impl Action {
    pub fn new(thread: ThreadId, invocation: Invocation, response: Response) -> Self {
        Self {
            thread,
            invocation,
            response,
        }
    }

    /// True when this action is `(t, i)` regardless of its response.
    pub fn matches_call(&self, thread: ThreadId, invocation: &Invocation) -> bool {
        self.thread == thread && &self.invocation == invocation
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} -> {}",
            self.thread, self.invocation, self.response
        )
    }
}

/// JSON wire form of an [`Action`]: `{"thread", "op", "args", "resp"}`.
///
/// `resp` is an integer or a string; `null` encodes a pending invocation
/// (accepted on input for membership queries, never produced for stored
/// histories by the tools in this workspace).
#[derive(Serialize, Deserialize)]
struct ActionWire {
    thread: u32,
    op: String,
    #[serde(default)]
    args: Vec<i64>,
    resp: Option<RespValue>,
}

impl From<&Action> for ActionWire {
    fn from(a: &Action) -> Self {
        ActionWire {
            thread: a.thread.0,
            op: a.invocation.op.clone(),
            args: a.invocation.args.clone(),
            resp: a.response.value().cloned(),
        }
    }
}

impl From<ActionWire> for Action {
    fn from(w: ActionWire) -> Self {
        Action {
            thread: ThreadId(w.thread),
            invocation: Invocation::new(w.op, w.args),
            response: match w.resp {
                None => Response::NoResp,
                Some(v) => Response::Resp(v),
            },
        }
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ActionWire::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        ActionWire::deserialize(deserializer).map(Action::from)
    }
}

/// A chronological sequence of actions.
#[derive(
    Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct History(Vec<Action>);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("history length {len} exceeds the enumeration bound {bound}")]
    BoundExceeded { len: usize, bound: usize },
}

impl History {
    pub fn new() -> Self {
        History(Vec::new())
    }

    pub fn from_actions(actions: impl IntoIterator<Item = Action>) -> Self {
        History(actions.into_iter().collect())
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, action: Action) {
        self.0.push(action);
    }

    pub fn first(&self) -> Option<&Action> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&Action> {
        self.0.last()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Action> {
        self.0.iter()
    }

    /// `self ⧺ other`.
    pub fn concat(&self, other: &History) -> History {
        let mut out = self.clone();
        out.0.extend(other.0.iter().cloned());
        out
    }

    /// `self ⧺ [action]`.
    pub fn with_action(&self, action: Action) -> History {
        let mut out = self.clone();
        out.push(action);
        out
    }

    /// Removes and returns the earliest action.
    pub fn pop_front(&mut self) -> Option<Action> {
        if self.0.is_empty() {
            None
        } else {
            Some(self.0.remove(0))
        }
    }

    /// All thread ids appearing in this history, ascending.
    pub fn threads(&self) -> Vec<ThreadId> {
        let mut ts: Vec<ThreadId> = self.0.iter().map(|a| a.thread).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    /// The thread-restricted subhistory: exactly the actions of `t`, in order.
    pub fn restrict(&self, t: ThreadId) -> History {
        History(self.0.iter().filter(|a| a.thread == t).cloned().collect())
    }

    /// True when `other` preserves every per-thread subsequence of `self`.
    ///
    /// Actions may move across threads' positions but never within a thread.
    pub fn is_reordering_of(&self, other: &History) -> bool {
        let mut threads = self.threads();
        for t in other.threads() {
            if !threads.contains(&t) {
                threads.push(t);
            }
        }
        threads
            .iter()
            .all(|&t| self.restrict(t) == other.restrict(t))
    }

    /// Every distinct reordering of this history, each exactly once.
    ///
    /// Interleavings are produced in lexicographic order of the thread-choice
    /// sequence (ascending thread id at every branch), so the original history
    /// is not necessarily first. The count always equals the multinomial
    /// `n! / Π_t n_t!`.
    pub fn reorderings(&self) -> Result<Vec<History>, HistoryError> {
        if self.len() > ENUMERATION_BOUND {
            return Err(HistoryError::BoundExceeded {
                len: self.len(),
                bound: ENUMERATION_BOUND,
            });
        }
        let mut queues: BTreeMap<ThreadId, Vec<&Action>> = BTreeMap::new();
        for a in &self.0 {
            queues.entry(a.thread).or_default().push(a);
        }
        let order: Vec<ThreadId> = queues.keys().copied().collect();
        let mut positions: BTreeMap<ThreadId, usize> =
            order.iter().map(|&t| (t, 0usize)).collect();
        let mut out = Vec::new();
        let mut current: Vec<Action> = Vec::with_capacity(self.len());
        interleave(&queues, &order, &mut positions, &mut current, &mut out);
        Ok(out)
    }

    /// All prefixes of this history in increasing length, `[]` first.
    pub fn prefixes(&self) -> Vec<History> {
        (0..=self.len())
            .map(|n| History(self.0[..n].to_vec()))
            .collect()
    }

    /// True when some action stores `NoResp`.
    pub fn has_pending(&self) -> bool {
        self.0.iter().any(|a| a.response.is_pending())
    }
}

fn interleave(
    queues: &BTreeMap<ThreadId, Vec<&Action>>,
    order: &[ThreadId],
    positions: &mut BTreeMap<ThreadId, usize>,
    current: &mut Vec<Action>,
    out: &mut Vec<History>,
) {
    let mut advanced = false;
    for &t in order {
        let pos = positions[&t];
        let queue = &queues[&t];
        if pos < queue.len() {
            advanced = true;
            current.push(queue[pos].clone());
            *positions.get_mut(&t).unwrap() = pos + 1;
            interleave(queues, order, positions, current, out);
            *positions.get_mut(&t).unwrap() = pos;
            current.pop();
        }
    }
    if !advanced {
        out.push(History(current.clone()));
    }
}

impl From<Vec<Action>> for History {
    fn from(actions: Vec<Action>) -> Self {
        History(actions)
    }
}

impl FromIterator<Action> for History {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        History(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a History {
    type Item = &'a Action;
    type IntoIter = std::slice::Iter<'a, Action>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl std::ops::Index<usize> for History {
    type Output = Action;

    fn index(&self, idx: usize) -> &Action {
        &self.0[idx]
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (idx, a) in self.0.iter().enumerate() {
            if idx > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(t: u32, op: &str, resp: i64) -> Action {
        Action::new(ThreadId(t), Invocation::nullary(op), Response::int(resp))
    }

    fn hist(actions: &[Action]) -> History {
        History::from_actions(actions.iter().cloned())
    }

    #[test]
    fn restrict_selects_thread_actions_in_order() {
        let a_open = Action::new(ThreadId(0), Invocation::nullary("open"), Response::int(1));
        let b_open = Action::new(ThreadId(1), Invocation::nullary("open"), Response::int(2));
        let a_close = Action::new(
            ThreadId(0),
            Invocation::new("close", [1]),
            Response::code("OK"),
        );
        let h = hist(&[a_open.clone(), b_open, a_close.clone()]);
        assert_eq!(h.restrict(ThreadId(0)), hist(&[a_open, a_close]));
    }

    #[test]
    fn restrict_empty_and_absent_thread() {
        assert_eq!(History::new().restrict(ThreadId(0)), History::new());
        let h = hist(&[act(1, "open", 2)]);
        assert_eq!(h.restrict(ThreadId(0)), History::new());
    }

    #[test]
    fn restrict_is_idempotent() {
        let h = hist(&[act(0, "a", 0), act(1, "b", 0), act(0, "c", 0)]);
        let r = h.restrict(ThreadId(0));
        assert_eq!(r.restrict(ThreadId(0)), r);
    }

    #[test]
    fn reordering_respects_per_thread_order() {
        // h1 = [aA, bB, aC]; moving bB first is a reordering, swapping aC
        // before aA is not.
        let h1 = hist(&[act(0, "A", 0), act(1, "B", 0), act(0, "C", 0)]);
        let good = hist(&[act(1, "B", 0), act(0, "A", 0), act(0, "C", 0)]);
        let bad = hist(&[act(1, "B", 0), act(0, "C", 0), act(0, "A", 0)]);
        assert!(h1.is_reordering_of(&good));
        assert!(good.is_reordering_of(&h1));
        assert!(!h1.is_reordering_of(&bad));
        assert!(h1.is_reordering_of(&h1));
    }

    #[test]
    fn reordering_distinguishes_action_multisets() {
        let h1 = hist(&[act(0, "A", 0)]);
        let h2 = hist(&[act(1, "A", 0)]);
        assert!(!h1.is_reordering_of(&h2));
    }

    #[test]
    fn reorderings_two_alpha_one_beta() {
        let h = hist(&[act(0, "A", 0), act(0, "B", 0), act(1, "C", 0)]);
        let all = h.reorderings().unwrap();
        // 3! / (2! * 1!) = 3
        assert_eq!(all.len(), 3);
        for r in &all {
            assert!(h.is_reordering_of(r));
            assert_eq!(r.len(), h.len());
        }
        // Distinct.
        for (i, r) in all.iter().enumerate() {
            for s in &all[i + 1..] {
                assert_ne!(r, s);
            }
        }
    }

    #[test]
    fn reorderings_single_thread_is_identity() {
        let h = hist(&[act(0, "A", 0), act(0, "B", 0)]);
        assert_eq!(h.reorderings().unwrap(), vec![h.clone()]);
    }

    #[test]
    fn reorderings_of_empty() {
        assert_eq!(History::new().reorderings().unwrap(), vec![History::new()]);
    }

    #[test]
    fn reorderings_bound_exceeded() {
        let h: History = (0..9).map(|i| act(i % 3, "x", 0)).collect();
        assert_eq!(
            h.reorderings(),
            Err(HistoryError::BoundExceeded { len: 9, bound: 8 })
        );
    }

    #[test]
    fn prefixes_in_increasing_length() {
        let a = act(0, "a", 0);
        let b = act(1, "b", 0);
        let h = hist(&[a.clone(), b.clone()]);
        assert_eq!(
            h.prefixes(),
            vec![
                History::new(),
                hist(std::slice::from_ref(&a)),
                hist(&[a, b])
            ]
        );
        assert_eq!(History::new().prefixes(), vec![History::new()]);
        assert_eq!(h.prefixes().len(), h.len() + 1);
    }

    #[test]
    fn json_round_trip_and_wire_shape() {
        let h = hist(&[
            act(0, "open", 1),
            Action::new(
                ThreadId(1),
                Invocation::new("close", [1]),
                Response::code("OK"),
            ),
        ]);
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(
            json,
            r#"[{"thread":0,"op":"open","args":[],"resp":1},{"thread":1,"op":"close","args":[1],"resp":"OK"}]"#
        );
        let back: History = serde_json::from_str(&json).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn json_null_resp_is_pending() {
        let json = r#"[{"thread":0,"op":"open","args":[],"resp":null}]"#;
        let h: History = serde_json::from_str(json).unwrap();
        assert!(h.has_pending());
    }
}
