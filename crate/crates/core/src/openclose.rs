//! The open/close file-descriptor specification and its reference
//! implementation.
//!
//! The specification has two operations: `open()` returns a currently-unused
//! positive file descriptor, and `close(fd)` returns `OK` on success,
//! `EBADFD` if `fd` was never opened, or `ECLOSEDFD` if `fd` was previously
//! opened but is currently closed. Membership is decided by left-to-right
//! simulation; descriptors are never reused once returned, which also keeps
//! every region of `open` calls SIM-commutative.
//!
//! The reference implementation keeps a global counter `gfd` and a global
//! `closed` set, so every one of its steps touches shared state: it satisfies
//! the specification while being deliberately non-scalable.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::history::{Action, History, Invocation, RespValue, Response, ThreadId};
use crate::spec::SpecOracle;

pub const OPEN: &str = "open";
pub const CLOSE: &str = "close";

/// Non-descriptor response codes.
pub const OK: &str = "OK";
pub const EBADFD: &str = "EBADFD";
pub const ECLOSEDFD: &str = "ECLOSEDFD";

/// A response of the open/close interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OcResponse {
    /// A freshly allocated descriptor, always positive.
    Fd(i64),
    Ok,
    Ebadfd,
    Eclosedfd,
}

impl From<OcResponse> for RespValue {
    fn from(r: OcResponse) -> RespValue {
        match r {
            OcResponse::Fd(fd) => RespValue::Int(fd),
            OcResponse::Ok => RespValue::code(OK),
            OcResponse::Ebadfd => RespValue::code(EBADFD),
            OcResponse::Eclosedfd => RespValue::code(ECLOSEDFD),
        }
    }
}

impl From<OcResponse> for Response {
    fn from(r: OcResponse) -> Response {
        Response::Resp(r.into())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown invocation {invocation}")]
pub struct UnknownInvocation {
    pub invocation: Invocation,
}

/// The two invocation shapes, parsed from a generic [`Invocation`].
enum OcCall {
    Open,
    Close(i64),
}

fn parse_call(i: &Invocation) -> Result<OcCall, UnknownInvocation> {
    match (i.op.as_str(), i.args.as_slice()) {
        (OPEN, []) => Ok(OcCall::Open),
        (CLOSE, [fd]) => Ok(OcCall::Close(*fd)),
        _ => Err(UnknownInvocation {
            invocation: i.clone(),
        }),
    }
}

pub fn open_invocation() -> Invocation {
    Invocation::nullary(OPEN)
}

pub fn close_invocation(fd: i64) -> Invocation {
    Invocation::new(CLOSE, [fd])
}

/// Per-descriptor status during membership simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum FdStatus {
    #[default]
    NeverOpened,
    Open,
    Closed,
}

/// True iff `h` belongs to the open/close specification.
///
/// A trailing action with a pending (`NoResp`) response is accepted when its
/// invocation is well-formed; pending actions anywhere else reject the
/// history.
pub fn oc_member(h: &History) -> bool {
    let mut status: BTreeMap<i64, FdStatus> = BTreeMap::new();
    let n = h.len();
    for (idx, action) in h.iter().enumerate() {
        let call = match parse_call(&action.invocation) {
            Ok(call) => call,
            Err(_) => return false,
        };
        let value = match &action.response {
            Response::NoResp => return idx == n - 1,
            Response::Resp(v) => v,
        };
        match call {
            OcCall::Open => match value {
                RespValue::Int(fd) if *fd > 0 => {
                    let slot = status.entry(*fd).or_default();
                    if *slot != FdStatus::NeverOpened {
                        // Descriptors are never reused once returned.
                        return false;
                    }
                    *slot = FdStatus::Open;
                }
                _ => return false,
            },
            OcCall::Close(fd) => {
                let slot = status.entry(fd).or_default();
                let required = match *slot {
                    FdStatus::Open => OcResponse::Ok,
                    FdStatus::Closed => OcResponse::Eclosedfd,
                    FdStatus::NeverOpened => OcResponse::Ebadfd,
                };
                if *value != RespValue::from(required) {
                    return false;
                }
                if required == OcResponse::Ok {
                    *slot = FdStatus::Closed;
                }
            }
        }
    }
    true
}

/// The open/close specification packaged as a [`SpecOracle`] with finite
/// alphabets bounded by `fd_bound`.
#[derive(Debug, Clone)]
pub struct OpenCloseOracle {
    fd_bound: i64,
    invocations: Vec<Invocation>,
    responses: Vec<RespValue>,
}

impl OpenCloseOracle {
    pub fn fd_bound(&self) -> i64 {
        self.fd_bound
    }
}

/// Builds the oracle: invocations `open, close(1), ..., close(fd_bound)`;
/// responses `1, ..., fd_bound, OK, EBADFD, ECLOSEDFD` in that order.
pub fn oc_oracle(fd_bound: i64) -> OpenCloseOracle {
    assert!(fd_bound >= 1, "fd_bound must be at least 1");
    let mut invocations = vec![open_invocation()];
    invocations.extend((1..=fd_bound).map(close_invocation));
    let mut responses: Vec<RespValue> = (1..=fd_bound).map(RespValue::Int).collect();
    responses.push(RespValue::code(OK));
    responses.push(RespValue::code(EBADFD));
    responses.push(RespValue::code(ECLOSEDFD));
    OpenCloseOracle {
        fd_bound,
        invocations,
        responses,
    }
}

impl SpecOracle for OpenCloseOracle {
    fn is_member(&self, h: &History) -> bool {
        oc_member(h)
    }

    fn responses(&self) -> &[RespValue] {
        &self.responses
    }

    fn invocations(&self) -> &[Invocation] {
        &self.invocations
    }

    /// Valid iff `i` is in the alphabet and some alphabet response completes
    /// `h ⧺ [(t, i, r)]` into a member history. In particular `open` stops
    /// being valid once all `fd_bound` descriptors have been handed out.
    fn is_valid_invocation(&self, h: &History, t: ThreadId, i: &Invocation) -> bool {
        self.invocations.contains(i)
            && self.responses.iter().any(|r| {
                oc_member(&h.with_action(Action::new(
                    t,
                    i.clone(),
                    Response::Resp(r.clone()),
                )))
            })
    }
}

/// State of the reference implementation: a global descriptor counter and
/// the set of closed descriptors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RefImplState {
    pub gfd: i64,
    pub closed: BTreeSet<i64>,
}

impl RefImplState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One reference step: `open` increments the counter and returns it;
    /// `close(fd)` succeeds for open descriptors, reports `ECLOSEDFD` for
    /// already-closed ones, and `EBADFD` otherwise.
    pub fn step(&self, i: &Invocation) -> Result<(RefImplState, OcResponse), UnknownInvocation> {
        match parse_call(i)? {
            OcCall::Open => {
                let mut next = self.clone();
                next.gfd += 1;
                let fd = next.gfd;
                Ok((next, OcResponse::Fd(fd)))
            }
            OcCall::Close(fd) => {
                if 0 < fd && fd <= self.gfd && !self.closed.contains(&fd) {
                    let mut next = self.clone();
                    next.closed.insert(fd);
                    Ok((next, OcResponse::Ok))
                } else if self.closed.contains(&fd) {
                    Ok((self.clone(), OcResponse::Eclosedfd))
                } else {
                    Ok((self.clone(), OcResponse::Ebadfd))
                }
            }
        }
    }
}

/// Folds the reference implementation over an invocation sequence from the
/// initial state, recording one action per step. The result is the unique
/// history the (deterministic) reference implementation exhibits for that
/// invocation order.
pub fn ref_exhibits(invs: &[(ThreadId, Invocation)]) -> Result<History, UnknownInvocation> {
    let mut state = RefImplState::new();
    let mut h = History::new();
    for (t, i) in invs {
        let (next, resp) = state.step(i)?;
        state = next;
        h.push(Action::new(*t, i.clone(), resp.into()));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tid(t: u32) -> ThreadId {
        ThreadId(t)
    }

    fn open_act(t: u32, fd: i64) -> Action {
        Action::new(tid(t), open_invocation(), Response::int(fd))
    }

    fn close_act(t: u32, fd: i64, resp: OcResponse) -> Action {
        Action::new(tid(t), close_invocation(fd), resp.into())
    }

    #[test]
    fn member_accepts_close_close_with_eclosedfd() {
        let h3 = History::from_actions([
            open_act(0, 1),
            close_act(0, 1, OcResponse::Ok),
            close_act(0, 1, OcResponse::Eclosedfd),
        ]);
        assert!(oc_member(&h3));
        let h3_bad = History::from_actions([
            open_act(0, 1),
            close_act(0, 1, OcResponse::Ok),
            close_act(0, 1, OcResponse::Ok),
        ]);
        assert!(!oc_member(&h3_bad));
    }

    #[test]
    fn member_accepts_ebadfd_for_unopened_fd() {
        let h2 = History::from_actions([open_act(0, 1), close_act(1, 2, OcResponse::Ebadfd)]);
        assert!(oc_member(&h2));
        // close(2) responding OK is wrong: fd 2 was never opened.
        let h2_bad = History::from_actions([open_act(0, 1), close_act(0, 2, OcResponse::Ok)]);
        assert!(!oc_member(&h2_bad));
    }

    #[test]
    fn member_rejects_fd_reuse_even_after_close() {
        let h = History::from_actions([
            open_act(0, 1),
            close_act(0, 1, OcResponse::Ok),
            open_act(1, 1),
        ]);
        assert!(!oc_member(&h));
    }

    #[test]
    fn member_rejects_nonpositive_fd_and_garbage() {
        assert!(!oc_member(&History::from_actions([open_act(0, 0)])));
        assert!(!oc_member(&History::from_actions([open_act(0, -2)])));
        // Wrong arity and unknown ops are non-members, not errors.
        let weird = History::from_actions([Action::new(
            tid(0),
            Invocation::new("close", [1, 2]),
            Response::code(OK),
        )]);
        assert!(!oc_member(&weird));
        let unknown = History::from_actions([Action::new(
            tid(0),
            Invocation::nullary("dup"),
            Response::int(1),
        )]);
        assert!(!oc_member(&unknown));
        // An open answered with a code, or a close answered with an fd.
        let open_code = History::from_actions([Action::new(
            tid(0),
            open_invocation(),
            Response::code(OK),
        )]);
        assert!(!oc_member(&open_code));
        let close_int = History::from_actions([Action::new(
            tid(0),
            close_invocation(1),
            Response::int(1),
        )]);
        assert!(!oc_member(&close_int));
    }

    #[test]
    fn member_pending_only_as_final_action() {
        let pending_last = History::from_actions([
            open_act(0, 1),
            Action::new(tid(1), close_invocation(1), Response::NoResp),
        ]);
        assert!(oc_member(&pending_last));
        let pending_mid = History::from_actions([
            Action::new(tid(1), open_invocation(), Response::NoResp),
            open_act(0, 1),
        ]);
        assert!(!oc_member(&pending_mid));
    }

    #[test]
    fn member_empty_history() {
        assert!(oc_member(&History::new()));
    }

    #[test]
    fn oracle_alphabets() {
        let oracle = oc_oracle(3);
        assert_eq!(oracle.responses().len(), 6);
        assert_eq!(oracle.invocations().len(), 4);
        assert_eq!(oracle.invocations()[0], open_invocation());
        assert_eq!(oracle.responses()[0], RespValue::Int(1));
        assert_eq!(oracle.responses()[3], RespValue::code(OK));
    }

    #[test]
    fn oracle_open_validity_tracks_descriptor_exhaustion() {
        let oracle = oc_oracle(3);
        let h = History::from_actions([open_act(0, 1), open_act(1, 2), open_act(0, 3)]);
        assert!(!oracle.is_valid_invocation(&h, tid(1), &open_invocation()));
        assert!(oracle.is_valid_invocation(&h, tid(1), &close_invocation(2)));
        let partial = History::from_actions([open_act(0, 1)]);
        assert!(oracle.is_valid_invocation(&partial, tid(1), &open_invocation()));
        // Out-of-alphabet close.
        assert!(!oracle.is_valid_invocation(&partial, tid(1), &close_invocation(4)));
    }

    #[test]
    fn ref_step_open_counts_up() {
        let s0 = RefImplState::new();
        let (s1, r1) = s0.step(&open_invocation()).unwrap();
        assert_eq!(r1, OcResponse::Fd(1));
        assert_eq!(s1.gfd, 1);
        assert!(s1.closed.is_empty());
    }

    #[test]
    fn ref_step_close_transitions() {
        let s = RefImplState {
            gfd: 2,
            closed: BTreeSet::new(),
        };
        let (s1, r1) = s.step(&close_invocation(1)).unwrap();
        assert_eq!(r1, OcResponse::Ok);
        assert!(s1.closed.contains(&1));
        let (s2, r2) = s1.step(&close_invocation(1)).unwrap();
        assert_eq!(r2, OcResponse::Eclosedfd);
        assert_eq!(s2, s1);
        let (_, r3) = s.step(&close_invocation(3)).unwrap();
        assert_eq!(r3, OcResponse::Ebadfd);
        let (_, r4) = s.step(&close_invocation(0)).unwrap();
        assert_eq!(r4, OcResponse::Ebadfd);
    }

    #[test]
    fn ref_step_unknown_invocation() {
        let err = RefImplState::new()
            .step(&Invocation::nullary("dup"))
            .unwrap_err();
        assert_eq!(err.invocation, Invocation::nullary("dup"));
    }

    #[test]
    fn ref_exhibits_is_deterministic_fold() {
        let h = ref_exhibits(&[
            (tid(0), open_invocation()),
            (tid(1), open_invocation()),
        ])
        .unwrap();
        assert_eq!(h, History::from_actions([open_act(0, 1), open_act(1, 2)]));
        assert_eq!(ref_exhibits(&[]).unwrap(), History::new());
    }

    #[test]
    fn ref_first_open_always_returns_one() {
        // The reference implementation cannot exhibit [(beta, open, 2)].
        let h = ref_exhibits(&[(tid(1), open_invocation())]).unwrap();
        assert_eq!(h, History::from_actions([open_act(1, 1)]));
        assert_ne!(h, History::from_actions([open_act(1, 2)]));
    }
}
