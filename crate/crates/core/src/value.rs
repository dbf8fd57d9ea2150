//! Opaque values carried by operation arguments, responses and object states.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A comparable, hashable token.
///
/// Used for operation arguments, responses and sequential-object states alike,
/// so that specifications can be keyed and memoized without extra plumbing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Unit,
    Bool(bool),
    Int(i64),
    /// The "nothing to return" marker of queues, stacks and priority queues.
    Empty,
    /// Response of a self-enforced operation that detected a violation.
    Error,
    List(Vec<Value>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(items) => Some(items),
            _ => None,
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Empty => f.write_str("empty"),
            Value::Error => f.write_str("error"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse value `{text}`: {reason}")]
pub struct ValueParseError {
    pub text: String,
    pub reason: &'static str,
}

impl FromStr for Value {
    type Err = ValueParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason| ValueParseError {
            text: s.to_string(),
            reason,
        };
        let mut parser = Parser {
            bytes: s.trim().as_bytes(),
            pos: 0,
        };
        let value = parser.value().map_err(fail)?;
        if parser.pos != parser.bytes.len() {
            return Err(fail("trailing characters"));
        }
        Ok(value)
    }
}

/// Parses the text between the parentheses of `Label(...)`.
///
/// Empty text is [`Value::Unit`]; a comma-separated list is shorthand for a
/// [`Value::List`].
pub fn parse_argument(text: &str) -> Result<Value, ValueParseError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Value::Unit);
    }
    if !text.starts_with('[') && text.contains(',') {
        let items = text
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Value>, _>>()?;
        return Ok(Value::List(items));
    }
    text.parse()
}

/// Formats an argument so that [`parse_argument`] reads it back.
pub fn format_argument(arg: &Value) -> String {
    match arg {
        Value::Unit => String::new(),
        other => other.to_string(),
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value, &'static str> {
        self.skip_ws();
        let rest = &self.bytes[self.pos..];
        if rest.is_empty() {
            return Err("missing value");
        }
        if rest[0] == b'[' {
            self.pos += 1;
            let mut items = Vec::new();
            self.skip_ws();
            if self.bytes.get(self.pos) == Some(&b']') {
                self.pos += 1;
                return Ok(Value::List(items));
            }
            loop {
                items.push(self.value()?);
                self.skip_ws();
                match self.bytes.get(self.pos) {
                    Some(b',') => self.pos += 1,
                    Some(b']') => {
                        self.pos += 1;
                        return Ok(Value::List(items));
                    }
                    _ => return Err("unterminated list"),
                }
            }
        }
        if rest.starts_with(b"()") {
            self.pos += 2;
            return Ok(Value::Unit);
        }
        let len = rest
            .iter()
            .take_while(|b| b.is_ascii_alphanumeric() || **b == b'-' || **b == b'_')
            .count();
        if len == 0 {
            return Err("unexpected character");
        }
        let word = std::str::from_utf8(&rest[..len]).map_err(|_| "invalid utf-8")?;
        self.pos += len;
        match word {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            "empty" => Ok(Value::Empty),
            "error" => Ok(Value::Error),
            _ => word.parse().map(Value::Int).map_err(|_| "unknown token"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse_round_trip() {
        let samples = [
            Value::Unit,
            Value::Bool(true),
            Value::Int(-3),
            Value::Empty,
            Value::Error,
            Value::List(vec![Value::Int(1), Value::List(vec![]), Value::Empty]),
        ];
        for v in samples {
            assert_eq!(v.to_string().parse::<Value>().unwrap(), v);
        }
    }

    #[test]
    fn argument_shorthand() {
        assert_eq!(parse_argument("").unwrap(), Value::Unit);
        assert_eq!(parse_argument("2").unwrap(), Value::Int(2));
        assert_eq!(
            parse_argument("1, 5").unwrap(),
            Value::List(vec![Value::Int(1), Value::Int(5)])
        );
        assert!(parse_argument("1,").is_err());
        assert!("[1,2".parse::<Value>().is_err());
        assert!("hello".parse::<Value>().is_err());
    }
}
