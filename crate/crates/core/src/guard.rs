//! Guard functions: registration, argument checking, negation and
//! out-parameters.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::value::{type_check, TypeTag, Value};

/// One formal parameter of a guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// An input. `tag: None` accepts any type.
    In { tag: Option<TypeTag>, nullable: bool },
    /// A writable cell; the argument must be a symbol, which the guard binds.
    Out,
}

impl Param {
    pub const fn of(tag: TypeTag) -> Param {
        Param::In { tag: Some(tag), nullable: false }
    }

    pub const fn int() -> Param {
        Param::of(TypeTag::Int)
    }

    pub const fn str() -> Param {
        Param::of(TypeTag::Str)
    }

    pub const fn bool() -> Param {
        Param::of(TypeTag::Bool)
    }

    pub const fn float() -> Param {
        Param::of(TypeTag::Float)
    }

    pub const fn any() -> Param {
        Param::In { tag: None, nullable: false }
    }

    /// Lets `null` through to the guard function instead of failing the check.
    pub const fn nullable(self) -> Param {
        match self {
            Param::In { tag, .. } => Param::In { tag, nullable: true },
            Param::Out => Param::Out,
        }
    }

    pub fn is_out(&self) -> bool {
        matches!(self, Param::Out)
    }

    fn admits(&self, v: &Value) -> bool {
        match *self {
            Param::In { tag, nullable } => {
                if v.is_null() {
                    nullable
                } else {
                    tag.is_none_or(|t| type_check(v, t))
                }
            }
            Param::Out => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardSpec {
    name: String,
    params: Vec<Param>,
    variadic: Option<Param>,
    returns_truth: bool,
}

impl GuardSpec {
    pub fn new(name: impl Into<String>, params: impl IntoIterator<Item = Param>) -> Self {
        GuardSpec {
            name: name.into(),
            params: params.into_iter().collect(),
            variadic: None,
            returns_truth: true,
        }
    }

    /// Accept zero or more trailing arguments, each checked against `tail`.
    pub fn variadic(mut self, tail: Param) -> Self {
        self.variadic = Some(tail);
        self
    }

    /// The guard's return value is ignored; it succeeds whenever its
    /// arguments pass the type check.
    pub fn void(mut self) -> Self {
        self.returns_truth = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn variadic_tail(&self) -> Option<Param> {
        self.variadic
    }

    pub fn returns_truth(&self) -> bool {
        self.returns_truth
    }

    /// The formal parameter for argument position `i` given `argc` actuals,
    /// or `None` when the count is incompatible.
    pub fn param_at(&self, i: usize) -> Option<Param> {
        self.params.get(i).copied().or(self.variadic)
    }

    pub fn accepts_arity(&self, argc: usize) -> bool {
        if self.variadic.is_some() {
            argc >= self.params.len()
        } else {
            argc == self.params.len()
        }
    }
}

/// An internal error raised by a guard function. Unlike returning `false`,
/// this aborts the run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct GuardError(pub String);

impl GuardError {
    pub fn new(msg: impl Into<String>) -> Self {
        GuardError(msg.into())
    }
}

/// Actual argument handed to [`GuardRegistry::invoke`].
#[derive(Debug, Clone, PartialEq)]
pub enum GuardArg {
    In(Value),
    Out,
}

#[derive(Debug)]
enum Slot {
    In(Value),
    Out(Option<Value>),
}

/// The view a guard function gets of its arguments.
pub struct GuardCall<'a> {
    name: &'a str,
    slots: Vec<Slot>,
    force_exit: &'a mut bool,
}

impl GuardCall<'_> {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn value(&self, i: usize) -> Result<&Value, GuardError> {
        match self.slots.get(i) {
            Some(Slot::In(v)) => Ok(v),
            Some(Slot::Out(_)) => Err(self.err(i, "is an out-parameter")),
            None => Err(self.err(i, "is out of range")),
        }
    }

    pub fn int(&self, i: usize) -> Result<i64, GuardError> {
        self.value(i)?.as_int().ok_or_else(|| self.err(i, "is not an int"))
    }

    pub fn str(&self, i: usize) -> Result<&str, GuardError> {
        self.value(i)?.as_str().ok_or_else(|| self.err(i, "is not a string"))
    }

    /// Writes an out-parameter.
    pub fn set(&mut self, i: usize, v: impl Into<Value>) -> Result<(), GuardError> {
        let err = self.err(i, "is not an out-parameter");
        match self.slots.get_mut(i) {
            Some(Slot::Out(cell)) => {
                *cell = Some(v.into());
                Ok(())
            }
            _ => Err(err),
        }
    }

    /// Ask the main loop to stop after the current fact has been processed.
    pub fn force_exit(&mut self) {
        *self.force_exit = true;
    }

    fn err(&self, i: usize, what: &str) -> GuardError {
        GuardError(format!("guard `{}`: argument {i} {what}", self.name))
    }
}

pub type GuardFn = Arc<dyn Fn(&mut GuardCall<'_>) -> Result<bool, GuardError> + Send + Sync>;

/// Result of a guard invocation. `Success` carries the out-parameter values
/// the function wrote, by argument position.
#[derive(Debug, Clone, PartialEq)]
pub enum GuardOutcome {
    Success(Vec<(usize, Value)>),
    Failure,
}

impl GuardOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, GuardOutcome::Success(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GuardId(pub(crate) usize);

#[derive(Clone)]
struct Registered {
    spec: GuardSpec,
    func: GuardFn,
}

#[derive(Clone)]
pub struct GuardRegistry {
    guards: Vec<Registered>,
    by_name: HashMap<String, GuardId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("guard `{0}` is already registered")]
pub struct DuplicateGuard(pub String);

impl Default for GuardRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl GuardRegistry {
    /// A registry holding only the builtin `equals` guard.
    pub fn new() -> Self {
        let mut reg = GuardRegistry { guards: Vec::new(), by_name: HashMap::new() };
        let equals = GuardSpec::new("equals", [Param::any().nullable(), Param::any().nullable()]);
        reg.register(equals, |call| Ok(call.value(0)? == call.value(1)?))
            .expect("empty registry");
        reg
    }

    pub fn register<F>(&mut self, spec: GuardSpec, func: F) -> Result<GuardId, DuplicateGuard>
    where
        F: Fn(&mut GuardCall<'_>) -> Result<bool, GuardError> + Send + Sync + 'static,
    {
        if self.by_name.contains_key(spec.name()) {
            return Err(DuplicateGuard(spec.name().to_string()));
        }
        let id = GuardId(self.guards.len());
        self.by_name.insert(spec.name().to_string(), id);
        self.guards.push(Registered { spec, func: Arc::new(func) });
        Ok(id)
    }

    pub fn resolve(&self, name: &str) -> Option<GuardId> {
        self.by_name.get(name).copied()
    }

    pub fn spec(&self, id: GuardId) -> &GuardSpec {
        &self.guards[id.0].spec
    }

    pub fn len(&self) -> usize {
        self.guards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guards.is_empty()
    }

    /// Runs a guard. A plain invocation fails without calling the function
    /// when any input argument is ill-typed or is a disallowed null; a
    /// negated invocation succeeds exactly when the plain one fails, and
    /// never yields out-bindings.
    pub fn invoke(
        &self,
        id: GuardId,
        negated: bool,
        args: Vec<GuardArg>,
        force_exit: &mut bool,
    ) -> Result<GuardOutcome, GuardError> {
        let plain = self.invoke_plain(id, args, force_exit)?;
        Ok(match (negated, plain) {
            (false, outcome) => outcome,
            (true, GuardOutcome::Success(_)) => GuardOutcome::Failure,
            (true, GuardOutcome::Failure) => GuardOutcome::Success(Vec::new()),
        })
    }

    /// Name-based convenience over [`invoke`](Self::invoke).
    pub fn invoke_by_name(
        &self,
        name: &str,
        negated: bool,
        args: Vec<GuardArg>,
    ) -> Result<GuardOutcome, GuardError> {
        let id = self
            .resolve(name)
            .ok_or_else(|| GuardError(format!("unknown guard `{name}`")))?;
        let mut force_exit = false;
        self.invoke(id, negated, args, &mut force_exit)
    }

    fn invoke_plain(
        &self,
        id: GuardId,
        args: Vec<GuardArg>,
        force_exit: &mut bool,
    ) -> Result<GuardOutcome, GuardError> {
        let guard = &self.guards[id.0];
        let spec = &guard.spec;
        if !spec.accepts_arity(args.len()) {
            return Err(GuardError(format!(
                "guard `{}` called with {} arguments",
                spec.name,
                args.len()
            )));
        }
        let mut slots = Vec::with_capacity(args.len());
        for (i, arg) in args.into_iter().enumerate() {
            let param = spec.param_at(i).expect("arity checked");
            match (param, arg) {
                (Param::Out, GuardArg::Out) => slots.push(Slot::Out(None)),
                (Param::In { .. }, GuardArg::In(v)) => {
                    if !param.admits(&v) {
                        return Ok(GuardOutcome::Failure);
                    }
                    slots.push(Slot::In(v));
                }
                (Param::Out, GuardArg::In(_)) | (Param::In { .. }, GuardArg::Out) => {
                    return Err(GuardError(format!(
                        "guard `{}`: argument {i} has the wrong parameter kind",
                        spec.name
                    )));
                }
            }
        }
        let mut call = GuardCall { name: &spec.name, slots, force_exit };
        let truth = (guard.func)(&mut call)?;
        if spec.returns_truth && !truth {
            return Ok(GuardOutcome::Failure);
        }
        let outs = call
            .slots
            .into_iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                Slot::Out(Some(v)) => Some((i, v)),
                _ => None,
            })
            .collect();
        Ok(GuardOutcome::Success(outs))
    }
}

impl fmt::Debug for GuardRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.guards.iter().map(|g| &g.spec)).finish()
    }
}
