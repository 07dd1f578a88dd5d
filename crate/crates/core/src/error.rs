use std::fmt;

use thiserror::Error;

use crate::guard::GuardError;
use crate::rule::RuleId;
use crate::value::TypeTag;

/// Where in the handler definition a compilation fault was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultLocation {
    Symbol(String),
    /// 0-based position among constraint declarations.
    Declaration(usize),
    Guard(String),
    /// `atom` is the 0-based position of the offending call in the rule's
    /// builder chain (`when` is atom 0).
    Rule { rule: RuleId, atom: Option<usize> },
}

impl FaultLocation {
    pub fn rule(&self) -> Option<RuleId> {
        match self {
            FaultLocation::Rule { rule, .. } => Some(*rule),
            _ => None,
        }
    }
}

impl fmt::Display for FaultLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultLocation::Symbol(name) => write!(f, "symbol `{name}`"),
            FaultLocation::Declaration(i) => write!(f, "declaration {i}"),
            FaultLocation::Guard(name) => write!(f, "guard `{name}`"),
            FaultLocation::Rule { rule, atom: Some(atom) } => write!(f, "{rule}, atom {atom}"),
            FaultLocation::Rule { rule, atom: None } => write!(f, "{rule}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    ReservedName,
    DuplicateConstraint,
    DuplicateGuard,
    UnknownConstraint,
    ArityMismatch,
    ModifierOnBody,
    /// An atom appears in a section where it is not allowed, e.g. a
    /// constraint atom after a guard without `.then`.
    MisplacedAtom,
    AllHeadsPassive,
    UnknownGuard,
    GuardArityMismatch,
    OutParamNotSymbol,
    NegatedGuardWithOutParam,
    UnboundGuardSymbol,
    UnboundBodySymbol,
    WildcardOutsideHead,
}

/// Raised when a handler fails runtime rule compilation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{location}: {description}")]
pub struct HandlerFault {
    pub kind: FaultKind,
    pub location: FaultLocation,
    pub description: String,
}

/// A failure inside a run that is not a logical inconsistency: a guard
/// function erred, a listener erred, or a firing produced an ill-formed fact.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineFault {
    #[error("{rule}: guard `{guard}` raised: {error}")]
    Guard { rule: RuleId, guard: String, error: GuardError },
    #[error("{rule}: out-parameter `{symbol}` is already bound")]
    OutBindingCollision { rule: RuleId, symbol: String },
    #[error("{rule}: symbol `{symbol}` is unbound")]
    UnboundSymbol { rule: RuleId, symbol: String },
    #[error("{rule}: body fact is ill-typed: {reason}")]
    BodyTypeError { rule: RuleId, reason: String },
    #[error("listener failed: {0}")]
    Listener(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("unknown constraint `{0}`")]
    UnknownConstraint(String),
    #[error("`{constraint}` expects {expected} {part} fields, got {found}")]
    ArityMismatch { constraint: String, part: &'static str, expected: usize, found: usize },
    #[error("`{constraint}` {part} field {position} must be {expected}")]
    TypeError { constraint: String, part: &'static str, position: usize, expected: TypeTag },
    #[error("the handler has failed; roll back before telling more facts")]
    TellOnFailed,
    #[error("the handler is not suspended")]
    ResumeNotSuspended,
    #[error("no open transaction")]
    NoOpenTransaction,
    #[error("cannot begin a transaction while rules are firing")]
    BeginDuringRun,
    #[error("unknown subscription {0}")]
    UnknownSubscription(u64),
    #[error(transparent)]
    Fault(#[from] EngineFault),
}

impl EngineError {
    /// Stable kebab-case name used by the CLI and the wire protocol.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownConstraint(_) => "unknown-constraint",
            EngineError::ArityMismatch { .. } => "arity-mismatch",
            EngineError::TypeError { .. } => "type-error",
            EngineError::TellOnFailed => "tell-on-failed",
            EngineError::ResumeNotSuspended => "resume-not-suspended",
            EngineError::NoOpenTransaction => "no-open-transaction",
            EngineError::BeginDuringRun => "begin-during-run",
            EngineError::UnknownSubscription(_) => "unknown-subscription",
            EngineError::Fault(_) => "engine-fault",
        }
    }
}
