//! Bundled handlers.
//!
//! `order-interval` combines an order-relation handler over variable names
//! (`leq`, `lt`, `eq`, `neq`) with integer interval domains (`dom`).

use crate::builder::HandlerBuilder;
use crate::engine::Handler;
use crate::guard::{GuardSpec, Param};
use crate::rule::Program;
use crate::value::TypeTag::{Int, Str};

pub const ORDER_INTERVAL: &str = "order-interval";

/// Names accepted by [`by_name`].
pub const HANDLERS: &[&str] = &[ORDER_INTERVAL];

pub fn by_name(name: &str) -> Option<Handler> {
    match name {
        ORDER_INTERVAL => Some(order_interval()),
        _ => None,
    }
}

pub fn order_interval() -> Handler {
    Handler::new(order_interval_program())
}

pub fn order_interval_program() -> Program {
    order_interval_builder().compile().expect("bundled handler compiles")
}

pub fn order_interval_builder() -> HandlerBuilder {
    let mut h = HandlerBuilder::new(ORDER_INTERVAL);
    let [leq, lt, eq, neq, dom] = h.symbols(["leq", "lt", "eq", "neq", "dom"]);
    let [x, y, a, b, c, d, e, f] = h.symbols(["X", "Y", "A", "B", "C", "D", "E", "F"]);
    let fail = h.fail();

    h.constraint(leq, [Str, Str]);
    h.constraint(lt, [Str, Str]);
    h.constraint(eq, [Str, Str]);
    h.constraint(neq, [Str, Str]);
    h.constraint(dom, [Str]).with([Int, Int]);

    h.guard(GuardSpec::new("lessOrEqual", [Param::int(), Param::int()]), |g| Ok(g.int(0)? <= g.int(1)?));
    // [c, d] lies within [a, b]
    h.guard(GuardSpec::new("includes", [Param::int(); 4]), |g| {
        Ok(g.int(0)? <= g.int(2)? && g.int(3)? <= g.int(1)?)
    });
    let isect = GuardSpec::new("isect", [Param::int(), Param::int(), Param::int(), Param::int(), Param::Out, Param::Out]);
    h.guard(isect.void(), |g| {
        let (lo, hi) = (g.int(0)?.max(g.int(2)?), g.int(1)?.min(g.int(3)?));
        g.set(4, lo)?;
        g.set(5, hi)?;
        Ok(true)
    });

    h.when(leq, [x, x]).named("leq-reflexive");
    h.when(eq, [x, x]).named("eq-reflexive");
    h.when(lt, [x, y]).then(leq, [x, y]).and(neq, [x, y]).named("lt-split");
    h.when(neq, [x, x]).then(fail, ()).named("neq-irreflexive");
    h.when(leq, [x, y]).and(leq, [y, x]).passive().then(eq, [x, y]).named("leq-antisymmetry");
    h.when(eq, [x, y]).and(eq, [x, y]).passive().keep().named("eq-duplicate");
    h.when(eq, [x, y]).keep().then(eq, [y, x]).named("eq-symmetry");
    h.when(eq, [x, y])
        .keep()
        .and(dom, [x])
        .with([a, b])
        .keep()
        .and(dom, [y])
        .with([c, d])
        .keep()
        .guard("!equals", [x, y])
        .then(dom, [x])
        .with([c, d])
        .and(dom, [y])
        .with([a, b])
        .named("dom-eq-exchange");
    h.when(dom, [x]).with([a, b]).and("!lessOrEqual", [a, b]).then(fail, ()).named("dom-empty");
    h.when(dom, [x])
        .with([a, b])
        .and(dom, [x])
        .with([c, d])
        .passive()
        .keep()
        .guard("includes", [a, b, c, d])
        .named("dom-redundant");
    h.when(dom, [x])
        .with([a, b])
        .and(dom, [x])
        .with([c, d])
        .passive()
        .guard("!includes", [a, b, c, d])
        .and("isect", [a, b, c, d, e, f])
        .then(dom, [x])
        .with([e, f])
        .named("dom-intersect");
    h
}

/// Closed-form fixpoint of the `dom` rules for one variable: the
/// intersection of all told intervals, or `None` when it is empty.
pub fn interval_fixpoint_bounds(bounds: &[(i64, i64)]) -> Option<(i64, i64)> {
    let lo = bounds.iter().map(|b| b.0).max()?;
    let hi = bounds.iter().map(|b| b.1).min()?;
    (lo <= hi).then_some((lo, hi))
}
