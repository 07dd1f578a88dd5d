//! Compiled rule model: signatures, patterns, rules, the occurrence index
//! and head matching.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{EngineError, FaultKind, FaultLocation, HandlerFault};
use crate::fact::Fact;
use crate::guard::{GuardId, GuardRegistry};
use crate::symbol::Symbol;
use crate::value::{type_check, values_equal, TypeTag, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSignature {
    pub name: Arc<str>,
    pub key: Vec<TypeTag>,
    pub data: Vec<TypeTag>,
}

impl ConstraintSignature {
    /// Checks arity and per-position types of a fact against this signature.
    pub fn check(&self, fact: &Fact) -> Result<(), EngineError> {
        for (part, tags, values) in [("key", &self.key, &fact.key), ("data", &self.data, &fact.data)] {
            if tags.len() != values.len() {
                return Err(EngineError::ArityMismatch {
                    constraint: self.name.to_string(),
                    part,
                    expected: tags.len(),
                    found: values.len(),
                });
            }
            if let Some(position) = values.iter().zip(tags).position(|(v, t)| !type_check(v, *t)) {
                return Err(EngineError::TypeError {
                    constraint: self.name.to_string(),
                    part,
                    position,
                    expected: tags[position],
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstraintId(pub(crate) usize);

impl ConstraintId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// 1-based ordinal of a rule in definition order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleId(pub u32);

impl RuleId {
    pub(crate) fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rule {}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Literal(Value),
    Bind(Symbol),
    Wildcard,
}

impl From<Symbol> for Pattern {
    fn from(s: Symbol) -> Self {
        if s.is_wildcard() {
            Pattern::Wildcard
        } else {
            Pattern::Bind(s)
        }
    }
}

impl From<Value> for Pattern {
    fn from(v: Value) -> Self {
        Pattern::Literal(v)
    }
}

impl From<&str> for Pattern {
    fn from(s: &str) -> Self {
        Pattern::Literal(s.into())
    }
}

impl From<i64> for Pattern {
    fn from(i: i64) -> Self {
        Pattern::Literal(i.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadElement {
    pub constraint: ConstraintId,
    pub key: Vec<Pattern>,
    pub data: Vec<Pattern>,
    pub passive: bool,
    pub keep: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardAtom {
    pub name: String,
    pub negated: bool,
    pub args: Vec<Pattern>,
    pub(crate) guard: Option<GuardId>,
}

impl GuardAtom {
    pub(crate) fn resolved(&self) -> GuardId {
        self.guard.expect("guard resolved at compile time")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BodyAtom {
    pub constraint: ConstraintId,
    pub key: Vec<Pattern>,
    pub data: Vec<Pattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: RuleId,
    pub label: Option<String>,
    pub heads: Vec<HeadElement>,
    pub guards: Vec<GuardAtom>,
    pub body: Vec<BodyAtom>,
}

/// Active head position of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occurrence {
    pub rule: RuleId,
    pub head: usize,
}

/// Per constraint, every active head occurrence in (rule, head) order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OccurrenceIndex {
    by_constraint: Vec<Vec<Occurrence>>,
}

impl OccurrenceIndex {
    pub fn build(constraints: usize, rules: &[Rule]) -> Self {
        let mut by_constraint = vec![Vec::new(); constraints];
        for rule in rules {
            for (head, element) in rule.heads.iter().enumerate() {
                if !element.passive {
                    by_constraint[element.constraint.0].push(Occurrence { rule: rule.id, head });
                }
            }
        }
        OccurrenceIndex { by_constraint }
    }

    pub fn occurrences(&self, constraint: ConstraintId) -> &[Occurrence] {
        &self.by_constraint[constraint.0]
    }
}

/// Values bound to symbols while a rule is being matched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BindingFrame {
    slots: Vec<(Symbol, Value)>,
}

impl BindingFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: Symbol) -> Option<&Value> {
        self.slots.iter().find(|(k, _)| *k == s).map(|(_, v)| v)
    }

    /// Returns false when `s` is already bound.
    pub fn bind(&mut self, s: Symbol, v: Value) -> bool {
        if self.get(s).is_some() {
            return false;
        }
        self.slots.push((s, v));
        true
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Symbol, &Value)> {
        self.slots.iter().map(|(s, v)| (*s, v))
    }

    /// The value a pattern denotes under this frame, if determined.
    pub fn resolve(&self, p: &Pattern) -> Option<Value> {
        match p {
            Pattern::Literal(v) => Some(v.clone()),
            Pattern::Bind(s) => self.get(*s).cloned(),
            Pattern::Wildcard => None,
        }
    }
}

/// Matches one head element against a fact, extending `frame`. Repeated
/// symbols force equality. The caller checks the constraint; only the
/// fields are compared here.
pub fn match_head(element: &HeadElement, fact: &Fact, frame: &BindingFrame) -> Option<BindingFrame> {
    if element.key.len() != fact.key.len() || element.data.len() != fact.data.len() {
        return None;
    }
    let mut out = frame.clone();
    let pairs = element.key.iter().zip(fact.key.iter()).chain(element.data.iter().zip(fact.data.iter()));
    for (pattern, value) in pairs {
        match pattern {
            Pattern::Wildcard => {}
            Pattern::Literal(lit) => {
                if !values_equal(lit, value) {
                    return None;
                }
            }
            Pattern::Bind(s) => match out.get(*s) {
                Some(bound) => {
                    if !values_equal(bound, value) {
                        return None;
                    }
                }
                None => {
                    out.slots.push((*s, value.clone()));
                }
            },
        }
    }
    Some(out)
}

/// A compiled handler definition: immutable once built.
#[derive(Debug, Clone)]
pub struct Program {
    pub(crate) name: String,
    pub(crate) symbols: Vec<Arc<str>>,
    pub(crate) constraints: Vec<ConstraintSignature>,
    pub(crate) by_name: HashMap<Arc<str>, ConstraintId>,
    pub(crate) rules: Vec<Rule>,
    pub(crate) index: OccurrenceIndex,
    pub(crate) guards: GuardRegistry,
}

impl Program {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// All declared constraints; index 0 is the predefined `fail`.
    pub fn constraints(&self) -> &[ConstraintSignature] {
        &self.constraints
    }

    pub fn constraint_id(&self, name: &str) -> Option<ConstraintId> {
        self.by_name.get(name).copied()
    }

    pub fn signature(&self, id: ConstraintId) -> &ConstraintSignature {
        &self.constraints[id.0]
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> &Rule {
        &self.rules[id.slot()]
    }

    pub fn index(&self) -> &OccurrenceIndex {
        &self.index
    }

    pub fn guards(&self) -> &GuardRegistry {
        &self.guards
    }

    pub fn symbol_name(&self, s: Symbol) -> &str {
        &self.symbols[s.0 as usize]
    }

    /// A rule's label, or `rule N` when it has none.
    pub fn rule_label(&self, id: RuleId) -> String {
        self.rule(id).label.clone().unwrap_or_else(|| id.to_string())
    }

    /// Checks a fact against its constraint's signature.
    pub fn check_fact(&self, fact: &Fact) -> Result<ConstraintId, EngineError> {
        let id = self
            .constraint_id(&fact.constraint)
            .ok_or_else(|| EngineError::UnknownConstraint(fact.constraint.to_string()))?;
        self.constraints[id.0].check(fact)?;
        Ok(id)
    }
}

/// Resolves guards, checks symbol binding, and builds the occurrence index.
pub(crate) fn compile(
    name: String,
    symbols: Vec<Arc<str>>,
    constraints: Vec<ConstraintSignature>,
    mut rules: Vec<Rule>,
    guards: GuardRegistry,
) -> Result<Program, HandlerFault> {
    for rule in &mut rules {
        check_rule(rule, &symbols, &guards)?;
    }
    let by_name = constraints
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.clone(), ConstraintId(i)))
        .collect();
    let index = OccurrenceIndex::build(constraints.len(), &rules);
    Ok(Program { name, symbols, constraints, by_name, rules, index, guards })
}

fn check_rule(rule: &mut Rule, symbols: &[Arc<str>], guards: &GuardRegistry) -> Result<(), HandlerFault> {
    let id = rule.id;
    let fault = |kind, atom: usize, description: String| HandlerFault {
        kind,
        location: FaultLocation::Rule { rule: id, atom: Some(atom) },
        description,
    };
    let sym = |s: Symbol| symbols[s.0 as usize].clone();

    if rule.heads.iter().all(|h| h.passive) {
        return Err(HandlerFault {
            kind: FaultKind::AllHeadsPassive,
            location: FaultLocation::Rule { rule: id, atom: None },
            description: "every head element is passive, so the rule can never fire".into(),
        });
    }

    let mut bound: Vec<Symbol> = Vec::new();
    for head in &rule.heads {
        for p in head.key.iter().chain(&head.data) {
            if let Pattern::Bind(s) = p {
                bound.push(*s);
            }
        }
    }

    let mut atom = rule.heads.len();
    for g in &mut rule.guards {
        let gid = guards.resolve(&g.name).ok_or_else(|| {
            fault(FaultKind::UnknownGuard, atom, format!("unknown guard `{}`", g.name))
        })?;
        let spec = guards.spec(gid);
        if !spec.accepts_arity(g.args.len()) {
            return Err(fault(
                FaultKind::GuardArityMismatch,
                atom,
                format!("guard `{}` does not accept {} arguments", g.name, g.args.len()),
            ));
        }
        let mut outs = Vec::new();
        for (i, arg) in g.args.iter().enumerate() {
            let is_out = spec.param_at(i).expect("arity checked").is_out();
            match (is_out, arg) {
                (true, Pattern::Bind(s)) => outs.push(*s),
                (true, _) => {
                    return Err(fault(
                        FaultKind::OutParamNotSymbol,
                        atom,
                        format!("argument {i} of guard `{}` is an out-parameter and needs a symbol", g.name),
                    ))
                }
                (false, Pattern::Bind(s)) if !bound.contains(s) => {
                    return Err(fault(
                        FaultKind::UnboundGuardSymbol,
                        atom,
                        format!("symbol `{}` is not bound before guard `{}`", sym(*s), g.name),
                    ))
                }
                (false, Pattern::Wildcard) => {
                    return Err(fault(
                        FaultKind::WildcardOutsideHead,
                        atom,
                        format!("`_` passed to guard `{}`", g.name),
                    ))
                }
                (false, _) => {}
            }
        }
        if g.negated && !outs.is_empty() {
            return Err(fault(
                FaultKind::NegatedGuardWithOutParam,
                atom,
                format!("negated guard `!{}` cannot bind out-parameters", g.name),
            ));
        }
        bound.extend(outs);
        g.guard = Some(gid);
        atom += 1;
    }

    for b in &rule.body {
        for p in b.key.iter().chain(&b.data) {
            match p {
                Pattern::Bind(s) if !bound.contains(s) => {
                    return Err(fault(
                        FaultKind::UnboundBodySymbol,
                        atom,
                        format!("symbol `{}` is used in the body but never bound", sym(*s)),
                    ))
                }
                Pattern::Wildcard => {
                    return Err(fault(FaultKind::WildcardOutsideHead, atom, "`_` in the body".into()))
                }
                _ => {}
            }
        }
        atom += 1;
    }
    Ok(())
}
