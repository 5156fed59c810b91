//! Shared fixtures for the criterion benchmarks.

use scrlab_core::history::{Action, History, Invocation, Response, ThreadId};
use scrlab_core::openclose::open_invocation;
use scrlab_core::spec::SpecOracle;

/// A history of `len` opens round-robined over `threads` threads, with
/// chronological descriptors.
pub fn open_history(threads: u32, len: usize) -> History {
    (0..len)
        .map(|slot| {
            Action::new(
                ThreadId(slot as u32 % threads),
                open_invocation(),
                Response::int(slot as i64 + 1),
            )
        })
        .collect()
}

/// The `(thread, invocation)` pairs of the two-thread open/close alphabet.
pub fn two_thread_pairs(fd_bound: i64) -> Vec<(ThreadId, Invocation)> {
    scrlab_core::rule_machine::witness_alphabet(
        &ThreadId::universe(2),
        scrlab_core::openclose::oc_oracle(fd_bound).invocations(),
    )
}
