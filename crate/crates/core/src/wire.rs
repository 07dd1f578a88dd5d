//! Line-delimited JSON encoding used by the debug server.
//!
//! Values are tagged objects: `null`, `{"t":"b","v":true}`,
//! `{"t":"i","v":"42"}` (decimal string, exact for all 64-bit integers),
//! `{"t":"f","v":1.5}` (infinities as the strings `"inf"` / `"-inf"`) and
//! `{"t":"s","v":"text"}`.

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::events::{Breakpoint, Event, EventKind};
use crate::rule::{Program, RuleId};
use crate::value::{TypeTag, Value};

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = match self {
            Value::Null => return s.serialize_none(),
            _ => s.serialize_map(Some(2))?,
        };
        match self {
            Value::Null => unreachable!(),
            Value::Bool(b) => {
                map.serialize_entry("t", "b")?;
                map.serialize_entry("v", b)?;
            }
            Value::Int(i) => {
                map.serialize_entry("t", "i")?;
                map.serialize_entry("v", &i.to_string())?;
            }
            Value::Float(x) => {
                map.serialize_entry("t", "f")?;
                let x = x.get();
                if x == f64::INFINITY {
                    map.serialize_entry("v", "inf")?;
                } else if x == f64::NEG_INFINITY {
                    map.serialize_entry("v", "-inf")?;
                } else {
                    map.serialize_entry("v", &x)?;
                }
            }
            Value::Str(text) => {
                map.serialize_entry("t", "s")?;
                map.serialize_entry("v", &**text)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        value_from_json(&Json::deserialize(d)?).map_err(de::Error::custom)
    }
}

pub fn value_from_json(json: &Json) -> Result<Value, String> {
    let obj = match json {
        Json::Null => return Ok(Value::Null),
        Json::Object(obj) if obj.len() == 2 => obj,
        other => return Err(format!("expected a tagged value, found {other}")),
    };
    let (Some(Json::String(tag)), Some(v)) = (obj.get("t"), obj.get("v")) else {
        return Err("tagged value needs \"t\" and \"v\"".into());
    };
    match (tag.as_str(), v) {
        ("b", Json::Bool(b)) => Ok(Value::Bool(*b)),
        ("i", Json::String(text)) => text.parse().map(Value::Int).map_err(|_| format!("bad integer {text:?}")),
        ("f", Json::String(text)) if text == "inf" => Ok(Value::float(f64::INFINITY).unwrap()),
        ("f", Json::String(text)) if text == "-inf" => Ok(Value::float(f64::NEG_INFINITY).unwrap()),
        ("f", Json::Number(n)) => {
            let x = n.as_f64().ok_or("bad float")?;
            Value::float(x).map_err(|e| e.to_string())
        }
        ("s", Json::String(text)) => Ok(Value::from(text.as_str())),
        (tag, v) => Err(format!("bad tagged value {tag:?}: {v}")),
    }
}

impl Serialize for TypeTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TypeTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        [TypeTag::Bool, TypeTag::Int, TypeTag::Float, TypeTag::Str]
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| de::Error::custom(format!("unknown type {name:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureWire {
    pub name: String,
    pub key: Vec<TypeTag>,
    pub data: Vec<TypeTag>,
}

/// Server-to-client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello { handler: String, constraints: Vec<SignatureWire>, rules: Vec<String> },
    Event { seq: u64, event: EventKind },
    Reply(Reply),
    /// The engine stopped at a breakpoint after broadcasting event `seq`.
    Paused { seq: u64 },
}

impl ServerMessage {
    pub fn hello(program: &Program) -> Self {
        ServerMessage::Hello {
            handler: program.name().to_string(),
            constraints: program
                .constraints()
                .iter()
                .skip(1)
                .map(|s| SignatureWire { name: s.name.to_string(), key: s.key.clone(), data: s.data.clone() })
                .collect(),
            rules: program.rules().iter().map(|r| program.rule_label(r.id)).collect(),
        }
    }

    pub fn event(event: &Event) -> Self {
        ServerMessage::Event { seq: event.seq, event: event.kind.clone() }
    }

    /// One JSON object, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn from_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: Json,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Reply {
    pub fn ok(id: Json, data: Json) -> Self {
        Reply { id, ok: true, data: Some(data), error: None }
    }

    pub fn err(id: Json, error: impl Into<String>) -> Self {
        Reply { id, ok: false, data: None, error: Some(error.into()) }
    }
}

/// Breakpoint as sent on the wire: exactly one of the fields is set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakpointWire {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub step: bool,
}

impl BreakpointWire {
    pub fn to_breakpoint(&self) -> Option<Breakpoint> {
        match (self.rule, &self.constraint, self.step) {
            (Some(r), None, false) if r > 0 => Some(Breakpoint::Rule(RuleId(r))),
            (None, Some(c), false) => Some(Breakpoint::Constraint(c.clone())),
            (None, None, true) => Some(Breakpoint::Step),
            _ => None,
        }
    }
}

impl From<&Breakpoint> for BreakpointWire {
    fn from(bp: &Breakpoint) -> Self {
        match bp {
            Breakpoint::Rule(id) => BreakpointWire { rule: Some(id.0), ..Default::default() },
            Breakpoint::Constraint(c) => BreakpointWire { constraint: Some(c.clone()), ..Default::default() },
            Breakpoint::Step => BreakpointWire { step: true, ..Default::default() },
        }
    }
}

/// A position in a `select` key pattern: a value, or `"_"` for any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPattern(pub Option<Value>);

impl Serialize for KeyPattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.0 {
            Some(v) => v.serialize(s),
            None => s.serialize_str("_"),
        }
    }
}

impl<'de> Deserialize<'de> for KeyPattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Json::deserialize(d)? {
            Json::String(s) if s == "_" => Ok(KeyPattern(None)),
            json => value_from_json(&json).map(|v| KeyPattern(Some(v))).map_err(de::Error::custom),
        }
    }
}

/// Client-to-server command, `{"id":K,"cmd":C,...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd")]
pub enum Command {
    #[serde(rename = "tell")]
    Tell {
        constraint: String,
        #[serde(default)]
        key: Vec<Value>,
        #[serde(default)]
        data: Vec<Value>,
    },
    #[serde(rename = "select")]
    Select {
        constraint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        key: Option<Vec<KeyPattern>>,
    },
    #[serde(rename = "begin")]
    Begin,
    #[serde(rename = "commit")]
    Commit,
    #[serde(rename = "partialCommit")]
    PartialCommit,
    #[serde(rename = "rollback")]
    Rollback,
    #[serde(rename = "resume")]
    Resume,
    /// Runs the main loop on the current goal.
    #[serde(rename = "run")]
    Run,
    #[serde(rename = "breakpoint.add")]
    BreakpointAdd(BreakpointWire),
    #[serde(rename = "breakpoint.remove")]
    BreakpointRemove(BreakpointWire),
    #[serde(rename = "breakpoint.list")]
    BreakpointList,
    #[serde(rename = "continue")]
    Continue,
    #[serde(rename = "step")]
    Step,
    #[serde(rename = "limit")]
    Limit {
        #[serde(default)]
        n: Option<usize>,
    },
}

/// A parsed client line. `id` is echoed back verbatim in the reply.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Json,
    pub command: Command,
}

impl Request {
    pub fn new(id: impl Into<Json>, command: Command) -> Self {
        Request { id: id.into(), command }
    }

    /// Parses one client line. On failure returns the `parse` error reply,
    /// carrying the id when one could be read.
    pub fn parse(line: &str) -> Result<Request, Box<Reply>> {
        let json: Json = serde_json::from_str(line).map_err(|_| Box::new(Reply::err(Json::Null, "parse")))?;
        let id = json.get("id").cloned().unwrap_or(Json::Null);
        match Command::deserialize(&json) {
            Ok(command) => Ok(Request { id, command }),
            Err(_) => Err(Box::new(Reply::err(id, "parse"))),
        }
    }

    pub fn to_line(&self) -> String {
        let mut json = serde_json::to_value(&self.command).expect("commands always serialize");
        let obj = json.as_object_mut().expect("commands are objects");
        let mut out = serde_json::Map::new();
        out.insert("id".into(), self.id.clone());
        out.append(obj);
        Json::Object(out).to_string()
    }
}
