//! Scalar values carried by inputs, rules and sessions.

use std::fmt;

use serde_json::Number;

/// A set input value. Absence (UNSET) is modelled as `Option<Value>::None`.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number(Number),
    Bool(bool),
    /// Uploaded-file token: the client-supplied file name.
    File(String),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn int(n: i64) -> Self {
        Value::Number(Number::from(n))
    }

    /// Builds a float number; non-finite input yields `None`.
    pub fn float(f: f64) -> Option<Self> {
        Number::from_f64(f).map(Value::Number)
    }

    pub fn file(name: impl Into<String>) -> Self {
        Value::File(name.into())
    }

    /// Numeric reading used by comparisons: numbers directly, text when it parses.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(n) => n.as_f64(),
            Value::Text(s) => parse_number(s).and_then(|n| n.as_f64()),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// The string an argument would carry.
    pub fn to_arg(&self) -> String {
        self.to_string()
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) | Value::File(s) => serde_json::Value::String(s.clone()),
            Value::Number(n) => serde_json::Value::Number(n.clone()),
            Value::Bool(b) => serde_json::Value::Bool(*b),
        }
    }

    /// Untyped reading of a JSON scalar (strings become text).
    pub fn from_json_scalar(v: &serde_json::Value) -> Option<Self> {
        match v {
            serde_json::Value::String(s) => Some(Value::Text(s.clone())),
            serde_json::Value::Number(n) => Some(Value::Number(n.clone())),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) | Value::File(s) => f.write_str(s),
            Value::Number(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl serde::Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

/// Parses a decimal number the way descriptor documents spell them.
pub fn parse_number(s: &str) -> Option<Number> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let first = s.as_bytes()[0];
    if !(first.is_ascii_digit() || first == b'-') {
        return None;
    }
    serde_json::from_str::<Number>(s).ok()
}
