use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::symbol::FAIL_NAME;
use crate::value::{tuple, write_tuple, Tuple, Value};

/// One point of a constraint's partial function: `c : key ↦ data`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fact {
    pub constraint: Arc<str>,
    pub key: Tuple,
    pub data: Tuple,
}

impl Fact {
    pub fn new<K, D, KV, DV>(constraint: &str, key: K, data: D) -> Fact
    where
        K: IntoIterator<Item = KV>,
        D: IntoIterator<Item = DV>,
        KV: Into<Value>,
        DV: Into<Value>,
    {
        Fact { constraint: constraint.into(), key: tuple(key), data: tuple(data) }
    }

    /// The unsatisfiable constraint `fail : () ↦ ()`.
    pub fn fail() -> Fact {
        Fact { constraint: FAIL_NAME.into(), key: Arc::new([]), data: Arc::new([]) }
    }

    pub fn is_fail(&self) -> bool {
        &*self.constraint == FAIL_NAME
    }
}

/// Canonical form: `dom("x") -> (3, 10)`, or `leq("a", "b")` when the
/// constraint carries no data fields.
impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.constraint)?;
        write_tuple(f, &self.key)?;
        if !self.data.is_empty() {
            f.write_str(" -> ")?;
            write_tuple(f, &self.data)?;
        }
        Ok(())
    }
}
