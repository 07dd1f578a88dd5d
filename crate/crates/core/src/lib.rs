//! A committed-choice constraint rule engine with an embedded rule DSL.
//!
//! Handlers are declared with [`HandlerBuilder`]: constraints with typed key
//! and data fields, host guard functions, and ordered multi-headed rules.
//! A [`Handler`] holds a goal queue and a constraint store and rewrites told
//! facts to a fixpoint, reporting every step on an event bus.

pub mod builder;
pub mod engine;
pub mod error;
pub mod events;
pub mod fact;
pub mod guard;
pub mod reference;
pub mod rule;
pub mod server;
pub mod session;
pub mod solvers;
pub mod symbol;
mod transaction;
pub mod wire;
pub mod value;

pub use builder::{AtomName, ConstraintDecl, HandlerBuilder, IntoPatterns, RuleBuilder};
pub use engine::{Handler, HandlerState, RunOutcome, StateView, Status, Store};
pub use error::{EngineError, EngineFault, FaultKind, FaultLocation, HandlerFault};
pub use events::{
    Breakpoint, BreakpointSet, Event, EventBus, EventKind, Listener, ListenerContext, ListenerError, RuleFiring,
    SubscriptionId, SuspendReason,
};
pub use fact::Fact;
pub use guard::{GuardCall, GuardError, GuardRegistry, GuardSpec, Param};
pub use rule::{ConstraintSignature, Pattern, Program, RuleId};
pub use symbol::Symbol;
pub use value::{tuple, Float, Tuple, TypeTag, Value, ValueError};
