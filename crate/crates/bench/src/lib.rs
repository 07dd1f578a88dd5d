//! Workloads for the engine benchmarks, built on the bundled order-interval
//! handler.

use cr_core::solvers::order_interval;
use cr_core::{Fact, Handler, RunOutcome, Value};

const NO_DATA: [Value; 0] = [];

fn var(i: usize) -> String {
    format!("v{i}")
}

/// `n` shrinking intervals on one variable: every tell after the first
/// fires the intersection rule against the stored bounds.
pub fn narrowing(n: usize) -> Vec<Fact> {
    (0..n as i64).map(|i| Fact::new("dom", ["x"], [i, 2 * n as i64 - i])).collect()
}

/// One interval on each of `n` variables, so the store grows to `n` facts.
pub fn wide_domains(n: usize) -> Vec<Fact> {
    (0..n).map(|i| Fact::new("dom", [var(i)], [0, i as i64])).collect()
}

/// A chain of `n` leq facts followed by the reversed chain. Each reversed
/// fact meets its stored mirror and becomes an equality.
pub fn antisymmetric_chain(n: usize) -> Vec<Fact> {
    let forward = (0..n).map(|i| Fact::new("leq", [var(i), var(i + 1)], NO_DATA));
    let backward = (0..n).map(|i| Fact::new("leq", [var(i + 1), var(i)], NO_DATA));
    forward.chain(backward).collect()
}

/// `n` strict inequalities, each split into a leq and a neq fact.
pub fn strict_chain(n: usize) -> Vec<Fact> {
    (0..n).map(|i| Fact::new("lt", [var(i), var(i + 1)], NO_DATA)).collect()
}

/// Tells `facts` one by one into a fresh handler.
pub fn run(facts: &[Fact]) -> Handler {
    let mut handler = order_interval();
    tell_all(&mut handler, facts);
    handler
}

pub fn tell_all(handler: &mut Handler, facts: &[Fact]) {
    for fact in facts {
        let outcome = handler.tell(fact.clone()).expect("workload facts are well typed");
        assert_eq!(outcome, RunOutcome::Fixpoint);
    }
}
