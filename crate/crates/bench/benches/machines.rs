use criterion::{black_box, criterion_group, criterion_main, Criterion};

use scrlab_bench::{open_history, two_thread_pairs};
use scrlab_core::history::{History, ThreadId};
use scrlab_core::openclose::{close_invocation, oc_oracle, open_invocation};
use scrlab_core::oracle_machine::OracleMachineState;
use scrlab_core::rule_machine::{find_witness, RuleMachineState};
use scrlab_core::spec::{sim_commutes, SearchBounds};

fn bench_reorderings(c: &mut Criterion) {
    let h = open_history(3, 7);
    c.bench_function("reorderings_len7_3threads", |b| {
        b.iter(|| black_box(&h).reorderings().unwrap().len())
    });
}

fn bench_sim_commutes(c: &mut Criterion) {
    let oracle = oc_oracle(3);
    let threads = ThreadId::universe(2);
    let y = open_history(2, 2);
    let bounds = SearchBounds::new(2, 2);
    c.bench_function("sim_commutes_two_opens_suffix2", |b| {
        b.iter(|| {
            sim_commutes(&oracle, &History::new(), black_box(&y), &threads, &bounds).unwrap()
        })
    });
}

fn bench_witness_search_exhaustion(c: &mut Criterion) {
    let pairs = two_thread_pairs(3);
    let target = open_history(2, 2).restrict(ThreadId(1));
    c.bench_function("witness_search_not_found_bound4", |b| {
        b.iter(|| find_witness(black_box(&target), &pairs, 4))
    });
}

fn bench_oracle_machine_script(c: &mut Criterion) {
    let oracle = oc_oracle(3);
    let threads = ThreadId::universe(2);
    let y = open_history(2, 2);
    let initial = OracleMachineState::init_unchecked(&History::new(), &y, &threads);
    c.bench_function("oracle_machine_replay_then_oracle", |b| {
        b.iter(|| {
            let (s, _) = initial.act(ThreadId(1), &open_invocation(), &oracle).unwrap();
            let (s, a) = s.act(ThreadId(0), &close_invocation(1), &oracle).unwrap();
            black_box((s, a))
        })
    });
}

fn bench_rule_machine_replay(c: &mut Criterion) {
    let pairs = two_thread_pairs(3);
    let x = open_history(2, 4);
    let initial = RuleMachineState::init(&x, &History::new(), &ThreadId::universe(2));
    c.bench_function("rule_machine_replay_four_steps", |b| {
        b.iter(|| {
            let mut s = initial.clone();
            for a in &x {
                let (next, _) = s.step(a.thread, &a.invocation, &pairs, 4).unwrap();
                s = next;
            }
            black_box(s)
        })
    });
}

criterion_group!(
    benches,
    bench_reorderings,
    bench_sim_commutes,
    bench_witness_search_exhaustion,
    bench_oracle_machine_script,
    bench_rule_machine_replay
);
criterion_main!(benches);
