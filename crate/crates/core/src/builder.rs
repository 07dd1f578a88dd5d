//! The fluent handler-definition DSL.
//!
//! ```
//! use cr_core::{HandlerBuilder, TypeTag::Str};
//!
//! let mut h = HandlerBuilder::new("order");
//! let [leq, eq, x, y] = h.symbols(["leq", "eq", "X", "Y"]);
//! h.constraint(leq, [Str, Str]);
//! h.constraint(eq, [Str, Str]);
//! h.when(leq, [x, x]);
//! h.when(leq, [x, y]).and(leq, [y, x]).passive().then(eq, [x, y]);
//! let handler = h.build().unwrap();
//! assert_eq!(handler.program().rules().len(), 2);
//! ```
//!
//! Rules and declarations are recorded when the builder expression is
//! dropped, i.e. at the end of the statement. Errors are collected and the
//! first one is reported by [`HandlerBuilder::build`].

use std::sync::Arc;

use crate::engine::Handler;
use crate::error::{FaultKind, FaultLocation, HandlerFault};
use crate::guard::{GuardCall, GuardError, GuardRegistry, GuardSpec};
use crate::rule::{compile, BodyAtom, ConstraintId, ConstraintSignature, GuardAtom, HeadElement, Pattern, Program, Rule, RuleId};
use crate::symbol::{Symbol, FAIL_NAME, WILDCARD_NAME};
use crate::value::TypeTag;

/// Anything usable as the pattern list of an atom.
pub trait IntoPatterns {
    fn into_patterns(self) -> Vec<Pattern>;
}

impl IntoPatterns for () {
    fn into_patterns(self) -> Vec<Pattern> {
        Vec::new()
    }
}

impl<T: Into<Pattern>, const N: usize> IntoPatterns for [T; N] {
    fn into_patterns(self) -> Vec<Pattern> {
        self.into_iter().map(Into::into).collect()
    }
}

impl<T: Into<Pattern>> IntoPatterns for Vec<T> {
    fn into_patterns(self) -> Vec<Pattern> {
        self.into_iter().map(Into::into).collect()
    }
}

impl<T: Into<Pattern> + Clone> IntoPatterns for &[T] {
    fn into_patterns(self) -> Vec<Pattern> {
        self.iter().cloned().map(Into::into).collect()
    }
}

/// First argument of `.and(...)`: a constraint symbol starts a head or body
/// atom, a string names a guard (with an optional leading `!`).
#[derive(Debug, Clone)]
pub enum AtomName {
    Constraint(Symbol),
    Guard(String),
}

impl From<Symbol> for AtomName {
    fn from(s: Symbol) -> Self {
        AtomName::Constraint(s)
    }
}

impl From<&str> for AtomName {
    fn from(s: &str) -> Self {
        AtomName::Guard(s.to_string())
    }
}

impl From<String> for AtomName {
    fn from(s: String) -> Self {
        AtomName::Guard(s)
    }
}

pub struct HandlerBuilder {
    name: String,
    symbols: Vec<Arc<str>>,
    constraints: Vec<ConstraintSignature>,
    declarations: usize,
    rules: Vec<Rule>,
    rules_defined: u32,
    guards: GuardRegistry,
    faults: Vec<HandlerFault>,
}

impl HandlerBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        HandlerBuilder {
            name: name.into(),
            symbols: vec![FAIL_NAME.into(), WILDCARD_NAME.into()],
            constraints: vec![ConstraintSignature { name: FAIL_NAME.into(), key: vec![], data: vec![] }],
            declarations: 0,
            rules: Vec::new(),
            rules_defined: 0,
            guards: GuardRegistry::new(),
            faults: Vec::new(),
        }
    }

    /// A fresh symbol. `fail` and `_` are predefined and cannot be created.
    pub fn symbol(&mut self, name: &str) -> Symbol {
        if name == FAIL_NAME || name == WILDCARD_NAME {
            self.faults.push(HandlerFault {
                kind: FaultKind::ReservedName,
                location: FaultLocation::Symbol(name.to_string()),
                description: format!("`{name}` is predefined"),
            });
        }
        let s = Symbol(self.symbols.len() as u32);
        self.symbols.push(name.into());
        s
    }

    pub fn symbols<const N: usize>(&mut self, names: [&str; N]) -> [Symbol; N] {
        names.map(|n| self.symbol(n))
    }

    pub fn fail(&self) -> Symbol {
        Symbol::FAIL
    }

    pub fn wildcard(&self) -> Symbol {
        Symbol::WILDCARD
    }

    pub fn symbol_name(&self, s: Symbol) -> &str {
        &self.symbols[s.0 as usize]
    }

    /// Declares `name` with the given key types; chain `.with(...)` for data types.
    pub fn constraint(&mut self, name: Symbol, key: impl IntoIterator<Item = TypeTag>) -> ConstraintDecl<'_> {
        ConstraintDecl { owner: self, name, key: key.into_iter().collect(), data: Vec::new() }
    }

    pub fn guard<F>(&mut self, spec: GuardSpec, func: F) -> &mut Self
    where
        F: Fn(&mut GuardCall<'_>) -> Result<bool, GuardError> + Send + Sync + 'static,
    {
        let name = spec.name().to_string();
        let fault = if name.is_empty() || name.starts_with('!') {
            Some((FaultKind::ReservedName, "guard names must be non-empty and may not start with `!`".to_string()))
        } else {
            self.guards.register(spec, func).err().map(|e| (FaultKind::DuplicateGuard, e.to_string()))
        };
        if let Some((kind, description)) = fault {
            self.faults.push(HandlerFault { kind, location: FaultLocation::Guard(name), description });
        }
        self
    }

    /// Starts a rule with its first head element.
    pub fn when(&mut self, constraint: Symbol, key: impl IntoPatterns) -> RuleBuilder<'_> {
        self.rules_defined += 1;
        let id = RuleId(self.rules_defined);
        let mut rb = RuleBuilder {
            owner: self,
            rule: Rule { id, label: None, heads: Vec::new(), guards: Vec::new(), body: Vec::new() },
            section: Section::Head,
            atoms: 0,
            last_data: None,
            fault: None,
        };
        rb.push_head(constraint, key.into_patterns());
        rb
    }

    /// Runs runtime compilation and returns the immutable rule program.
    pub fn compile(self) -> Result<Program, HandlerFault> {
        if let Some(fault) = self.faults.into_iter().next() {
            return Err(fault);
        }
        compile(self.name, self.symbols, self.constraints, self.rules, self.guards)
    }

    /// Compiles and creates a handler instance with an empty state.
    pub fn build(self) -> Result<Handler, HandlerFault> {
        self.compile().map(Handler::new)
    }

    fn lookup(&self, s: Symbol) -> Option<ConstraintId> {
        let name = &self.symbols[s.0 as usize];
        self.constraints.iter().position(|c| &c.name == name).map(ConstraintId)
    }
}

/// Pending constraint declaration; registered when dropped.
pub struct ConstraintDecl<'h> {
    owner: &'h mut HandlerBuilder,
    name: Symbol,
    key: Vec<TypeTag>,
    data: Vec<TypeTag>,
}

impl ConstraintDecl<'_> {
    pub fn with(mut self, data: impl IntoIterator<Item = TypeTag>) -> Self {
        self.data = data.into_iter().collect();
        self
    }
}

impl Drop for ConstraintDecl<'_> {
    fn drop(&mut self) {
        let owner = &mut *self.owner;
        let position = owner.declarations;
        owner.declarations += 1;
        let name = owner.symbols[self.name.0 as usize].clone();
        let kind = if self.name.is_fail() || self.name.is_wildcard() {
            Some(FaultKind::ReservedName)
        } else if owner.lookup(self.name).is_some() {
            Some(FaultKind::DuplicateConstraint)
        } else {
            None
        };
        match kind {
            Some(kind) => owner.faults.push(HandlerFault {
                kind,
                location: FaultLocation::Declaration(position),
                description: format!("constraint `{name}` cannot be declared again"),
            }),
            None => owner.constraints.push(ConstraintSignature {
                name,
                key: std::mem::take(&mut self.key),
                data: std::mem::take(&mut self.data),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Head,
    Guard,
    Body,
}

#[derive(Debug, Clone, Copy)]
enum LastAtom {
    Head(usize),
    Body(usize),
}

/// A rule under construction; registered when dropped.
pub struct RuleBuilder<'h> {
    owner: &'h mut HandlerBuilder,
    rule: Rule,
    section: Section,
    atoms: usize,
    /// The constraint atom that `.with` would attach to, and whether it already has.
    last_data: Option<(LastAtom, bool)>,
    fault: Option<HandlerFault>,
}

impl RuleBuilder<'_> {
    /// Attaches data patterns to the most recent head or body atom.
    pub fn with(mut self, data: impl IntoPatterns) -> Self {
        let data = data.into_patterns();
        if self.fault.is_some() {
            return self;
        }
        let Some(patterns) = self.checked_patterns(data) else { return self };
        match self.last_data {
            Some((last, false)) if self.section != Section::Guard => {
                match last {
                    LastAtom::Head(i) => self.rule.heads[i].data = patterns,
                    LastAtom::Body(i) => self.rule.body[i].data = patterns,
                }
                self.last_data = Some((last, true));
            }
            _ => self.set_fault(FaultKind::MisplacedAtom, "`.with` must follow a constraint atom, once".into()),
        }
        self
    }

    /// The preceding head element never initiates firing.
    pub fn passive(mut self) -> Self {
        self.modify(|h| h.passive = true, "passive");
        self
    }

    /// The fact matched by the preceding head element survives the firing.
    pub fn keep(mut self) -> Self {
        self.modify(|h| h.keep = true, "keep");
        self
    }

    /// Adds a head element, a guard, or a body atom depending on the section
    /// and on whether `name` is a constraint symbol or a guard name.
    pub fn and(mut self, name: impl Into<AtomName>, patterns: impl IntoPatterns) -> Self {
        let patterns = patterns.into_patterns();
        if self.fault.is_some() {
            return self;
        }
        match (name.into(), self.section) {
            (AtomName::Constraint(c), Section::Head) => self.push_head(c, patterns),
            (AtomName::Constraint(c), Section::Body) => self.push_body(c, patterns),
            (AtomName::Guard(g), Section::Head | Section::Guard) => self.push_guard(g, patterns),
            (AtomName::Constraint(_), Section::Guard) => {
                self.atoms += 1;
                self.set_fault(FaultKind::MisplacedAtom, "constraint atom after a guard; start the body with `.then`".into())
            }
            (AtomName::Guard(_), Section::Body) => {
                self.atoms += 1;
                self.set_fault(FaultKind::MisplacedAtom, "guard after the body has started".into())
            }
        }
        self
    }

    /// Adds a guard atom. `"!name"` negates the guard.
    pub fn guard(mut self, name: &str, args: impl IntoPatterns) -> Self {
        let args = args.into_patterns();
        if self.fault.is_some() {
            return self;
        }
        if self.section == Section::Body {
            self.atoms += 1;
            self.set_fault(FaultKind::MisplacedAtom, "guard after the body has started".into());
        } else {
            self.push_guard(name.to_string(), args);
        }
        self
    }

    /// Starts the body with its first atom.
    pub fn then(mut self, constraint: Symbol, key: impl IntoPatterns) -> Self {
        let key = key.into_patterns();
        if self.fault.is_some() {
            return self;
        }
        if self.section == Section::Body {
            self.atoms += 1;
            self.set_fault(FaultKind::MisplacedAtom, "`.then` used twice; continue the body with `.and`".into());
        } else {
            self.section = Section::Body;
            self.push_body(constraint, key);
        }
        self
    }

    /// A label shown in traces and in the debugger.
    pub fn named(mut self, label: &str) -> Self {
        self.rule.label = Some(label.to_string());
        self
    }

    pub fn id(&self) -> RuleId {
        self.rule.id
    }

    fn modify(&mut self, f: impl FnOnce(&mut HeadElement), what: &str) {
        if self.fault.is_some() {
            return;
        }
        match (self.section, self.last_data) {
            (Section::Head, Some((LastAtom::Head(i), _))) => f(&mut self.rule.heads[i]),
            _ => self.set_fault(FaultKind::ModifierOnBody, format!("`.{what}()` only applies to head elements")),
        }
    }

    fn push_head(&mut self, constraint: Symbol, key: Vec<Pattern>) {
        self.close_last();
        self.atoms += 1;
        let Some((cid, key)) = self.constraint_atom(constraint, key) else { return };
        self.rule.heads.push(HeadElement { constraint: cid, key, data: Vec::new(), passive: false, keep: false });
        self.last_data = Some((LastAtom::Head(self.rule.heads.len() - 1), false));
    }

    fn push_body(&mut self, constraint: Symbol, key: Vec<Pattern>) {
        self.close_last();
        self.atoms += 1;
        let Some((cid, key)) = self.constraint_atom(constraint, key) else { return };
        self.rule.body.push(BodyAtom { constraint: cid, key, data: Vec::new() });
        self.last_data = Some((LastAtom::Body(self.rule.body.len() - 1), false));
    }

    fn push_guard(&mut self, name: String, args: Vec<Pattern>) {
        self.close_last();
        self.atoms += 1;
        self.section = Section::Guard;
        self.last_data = None;
        let Some(args) = self.checked_patterns(args) else { return };
        let (negated, name) = match name.strip_prefix('!') {
            Some(rest) => (true, rest.to_string()),
            None => (false, name),
        };
        self.rule.guards.push(GuardAtom { name, negated, args, guard: None });
    }

    fn constraint_atom(&mut self, constraint: Symbol, key: Vec<Pattern>) -> Option<(ConstraintId, Vec<Pattern>)> {
        let key = self.checked_patterns(key)?;
        let Some(cid) = self.owner.lookup(constraint) else {
            let name = self.owner.symbol_name(constraint).to_string();
            self.set_fault(FaultKind::UnknownConstraint, format!("constraint `{name}` is not declared"));
            return None;
        };
        let sig = &self.owner.constraints[cid.0];
        if sig.key.len() != key.len() {
            let msg = format!("`{}` has {} key fields, got {} patterns", sig.name, sig.key.len(), key.len());
            self.set_fault(FaultKind::ArityMismatch, msg);
            return None;
        }
        Some((cid, key))
    }

    /// Checks the data arity of the most recent constraint atom.
    fn close_last(&mut self) {
        if self.fault.is_some() {
            return;
        }
        let Some((last, _)) = self.last_data else { return };
        let (cid, found) = match last {
            LastAtom::Head(i) => (self.rule.heads[i].constraint, self.rule.heads[i].data.len()),
            LastAtom::Body(i) => (self.rule.body[i].constraint, self.rule.body[i].data.len()),
        };
        let sig = &self.owner.constraints[cid.0];
        if sig.data.len() != found {
            let msg = format!("`{}` has {} data fields, got {} patterns", sig.name, sig.data.len(), found);
            self.set_fault(FaultKind::ArityMismatch, msg);
        }
    }

    fn checked_patterns(&mut self, patterns: Vec<Pattern>) -> Option<Vec<Pattern>> {
        if patterns.iter().any(|p| matches!(p, Pattern::Bind(s) if s.is_fail())) {
            self.set_fault(FaultKind::ReservedName, "`fail` cannot be used as a pattern".into());
            return None;
        }
        Some(patterns)
    }

    fn set_fault(&mut self, kind: FaultKind, description: String) {
        if self.fault.is_none() {
            self.fault = Some(HandlerFault {
                kind,
                location: FaultLocation::Rule { rule: self.rule.id, atom: Some(self.atoms.saturating_sub(1)) },
                description,
            });
        }
    }
}

impl Drop for RuleBuilder<'_> {
    fn drop(&mut self) {
        self.close_last();
        match self.fault.take() {
            Some(fault) => self.owner.faults.push(fault),
            None => {
                let id = self.rule.id;
                let rule = std::mem::replace(
                    &mut self.rule,
                    Rule { id, label: None, heads: vec![], guards: vec![], body: vec![] },
                );
                self.owner.rules.push(rule);
            }
        }
    }
}
