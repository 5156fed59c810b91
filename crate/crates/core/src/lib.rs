//! An executable laboratory for the scalable commutativity rule.
//!
//! The rule connects interface commutativity to implementation scalability:
//! whenever a region `Y` SIM-commutes in a history `X ⧺ Y` of a specification
//! with a correct implementation, some correct implementation is conflict-free
//! throughout `Y`. This crate makes every ingredient of that statement
//! executable at desk scale:
//!
//! - [`history`]: actions, histories, thread restriction, reordering and
//!   prefix enumeration;
//! - [`spec`]: specification oracles and brute-force SI/SIM-commutativity
//!   checkers with replayable failure witnesses;
//! - [`openclose`]: the open/close file-descriptor specification and its
//!   deliberately non-scalable reference implementation;
//! - [`rule_machine`]: the original replay/commute/emulate construction,
//!   whose witness search can fail after a reordered prefix of `Y` — the
//!   failure is reported as data, not a crash;
//! - [`oracle_machine`]: the revised construction that replaces the reference
//!   implementation with a specification oracle;
//! - [`conflict`]: executable conflict-freedom checks certifying which steps
//!   of which machine touch only the calling thread's state.
//!
//! Everything is deterministic: enumeration orders are fixed, and all
//! randomness flows from the seeded [`rng::SplitMix64`] generator.

pub mod conflict;
pub mod history;
pub mod openclose;
pub mod oracle_machine;
pub mod rng;
pub mod rule_machine;
pub mod spec;

pub use history::{
    Action, History, HistoryError, Invocation, RespValue, Response, ThreadId, ENUMERATION_BOUND,
};
pub use spec::{
    oracle_query, pending_query, si_commutes, sim_commutes, CheckError, CommutativityReport,
    CommutativityWitness, SearchBounds, SpecOracle, Verdict,
};
