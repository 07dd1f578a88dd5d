use std::fmt;

pub(crate) const FAIL_NAME: &str = "fail";
pub(crate) const WILDCARD_NAME: &str = "_";

/// A symbol names a constraint or stands for a value in a rule pattern.
///
/// Symbols are handed out by a [`HandlerBuilder`](crate::HandlerBuilder),
/// which keeps their names; ids are unique within one builder. `fail` and
/// `_` are predefined with ids 0 and 1. During a firing the value bound to a
/// symbol lives in the rule's [`BindingFrame`](crate::BindingFrame).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub(crate) u32);

impl Symbol {
    pub const FAIL: Symbol = Symbol(0);
    pub const WILDCARD: Symbol = Symbol(1);

    pub fn id(self) -> u32 {
        self.0
    }

    pub fn is_wildcard(self) -> bool {
        self == Symbol::WILDCARD
    }

    pub fn is_fail(self) -> bool {
        self == Symbol::FAIL
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${}", self.0)
    }
}
