//! Text formats for traces and tuple sets.
//!
//! Trace lines are `inv <proc> <uid> <Label>(<arg>)` or `res <proc> <uid> <value>`.
//! Tuple-set lines are `tuple <proc> <uid> <Label>(<arg>) -> <value> view{<uid>,...}`;
//! operations that only occur inside views are declared with
//! `pair <proc> <uid> <Label>(<arg>)`. In both formats `#` starts a comment.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::history::{Event, History, HistoryError, OpDescriptor, ProcessId, Uid};
use crate::value::{parse_argument, Value};
use crate::views::{ResponseTuple, TupleSet, View};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError {
        line,
        message: message.into(),
    }
}

fn parse_process(tok: &str, line: usize) -> Result<ProcessId, FormatError> {
    tok.strip_prefix('p')
        .and_then(|d| d.parse::<u32>().ok())
        .filter(|&i| i >= 1)
        .map(ProcessId::new)
        .ok_or_else(|| err(line, format!("`{tok}` is not a process (expected p<k>)")))
}

fn parse_uid(tok: &str, line: usize) -> Result<Uid, FormatError> {
    let parsed = tok
        .split_once('.')
        .and_then(|(a, b)| Some(Uid { process: a.parse().ok()?, seq: b.parse().ok()? }));
    parsed.ok_or_else(|| err(line, format!("`{tok}` is not a uid (expected <process>.<counter>)")))
}

fn parse_call(text: &str, line: usize) -> Result<(String, Value), FormatError> {
    let text = text.trim();
    let open = text.find('(').ok_or_else(|| err(line, format!("`{text}` is not a call")))?;
    let label = &text[..open];
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(err(line, format!("bad operation label `{label}`")));
    }
    let inside = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| err(line, format!("`{text}` lacks a closing parenthesis")))?;
    let arg = parse_argument(inside).map_err(|e| err(line, e.to_string()))?;
    Ok((label.to_string(), arg))
}

fn content(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

/// Parses a trace, reporting errors with 1-based line numbers.
pub fn parse_trace(text: &str) -> Result<History, FormatError> {
    let mut events = Vec::new();
    let mut lines = Vec::new();
    let mut invoked: BTreeMap<Uid, OpDescriptor> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let mut parts = body.splitn(4, char::is_whitespace);
        let kind = parts.next().unwrap_or_default();
        if kind != "inv" && kind != "res" {
            return Err(err(line, format!("unknown event kind `{kind}` (expected inv or res)")));
        }
        let p = parse_process(parts.next().unwrap_or_default(), line)?;
        let uid = parse_uid(parts.next().unwrap_or_default(), line)?;
        let rest = parts.next().unwrap_or_default().trim();
        match kind {
            "inv" => {
                let (label, arg) = parse_call(rest, line)?;
                let op = OpDescriptor::new(p, uid, &label, arg);
                invoked.entry(uid).or_insert_with(|| op.clone());
                events.push(Event::invoke(op));
            }
            "res" => {
                let value: Value = rest.parse().map_err(|e: crate::value::ValueParseError| err(line, e.to_string()))?;
                let op = invoked
                    .get(&uid)
                    .filter(|op| op.process == p)
                    .ok_or_else(|| err(line, format!("response for {uid} has no matching invocation")))?;
                events.push(Event::ret(op.clone(), value));
            }
            _ => unreachable!("checked above"),
        }
        lines.push(line);
    }
    History::validate(events).map_err(|e| {
        let index = match e {
            HistoryError::NotSequentialPerProcess { index }
            | HistoryError::ResponseWithoutInvocation { index }
            | HistoryError::DuplicateUid { index } => index,
            _ => 0,
        };
        err(lines.get(index).copied().unwrap_or(0), e.to_string())
    })
}

/// Writes a history in the trace format.
pub fn write_trace(h: &History) -> String {
    h.to_string()
}

/// Parses a tuple-set file.
pub fn parse_tuples(text: &str) -> Result<TupleSet, FormatError> {
    let mut known: BTreeMap<Uid, OpDescriptor> = BTreeMap::new();
    let mut pending_tuples: Vec<(usize, OpDescriptor, Value, Vec<Uid>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = content(raw);
        if body.is_empty() {
            continue;
        }
        let mut parts = body.splitn(4, char::is_whitespace);
        let kind = parts.next().unwrap_or_default();
        if kind != "pair" && kind != "tuple" {
            return Err(err(line, format!("unknown line kind `{kind}` (expected pair or tuple)")));
        }
        let p = parse_process(parts.next().unwrap_or_default(), line)?;
        let uid = parse_uid(parts.next().unwrap_or_default(), line)?;
        let rest = parts.next().unwrap_or_default().trim();
        let (call, tail) = match kind {
            "pair" => (rest, None),
            "tuple" => {
                let (call, tail) = rest.split_once("->").ok_or_else(|| err(line, "tuple lacks `->`"))?;
                (call, Some(tail.trim()))
            }
            _ => unreachable!("checked above"),
        };
        let (label, arg) = parse_call(call, line)?;
        let op = OpDescriptor::new(p, uid, &label, arg);
        if known.get(&uid).is_some_and(|o| *o != op) {
            return Err(err(line, format!("{uid} declared twice with different operations")));
        }
        known.insert(uid, op.clone());
        if let Some(tail) = tail {
            let (value_text, view_text) = tail.split_once("view{").ok_or_else(|| err(line, "tuple lacks `view{...}`"))?;
            let value: Value = value_text
                .trim()
                .parse()
                .map_err(|e: crate::value::ValueParseError| err(line, e.to_string()))?;
            let uids = view_text
                .trim()
                .strip_suffix('}')
                .ok_or_else(|| err(line, "view lacks `}`"))?
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| parse_uid(t, line))
                .collect::<Result<Vec<_>, _>>()?;
            pending_tuples.push((line, op, value, uids));
        }
    }
    let mut set = TupleSet::new();
    for (line, op, value, uids) in pending_tuples {
        let view = uids
            .iter()
            .map(|u| known.get(u).cloned().ok_or_else(|| err(line, format!("view mentions undeclared {u}"))))
            .collect::<Result<View, _>>()?;
        set.insert(ResponseTuple::new(op, value, Arc::new(view)))
            .map_err(|e| err(line, e.to_string()))?;
    }
    Ok(set)
}

/// Writes a tuple set, declaring view-only operations with `pair` lines.
pub fn write_tuples(set: &TupleSet) -> String {
    let mut out = String::new();
    for op in set.pairs() {
        if set.get(op.uid).is_none() {
            out.push_str(&format!("pair {} {} {}\n", op.process, op.uid, op.call()));
        }
    }
    for t in set.iter() {
        out.push_str(&format!("{t}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const STACK: &str = "\
# two pushes and two pops
inv p1 1.0 Push(2)
inv p2 2.0 Push(1)
res p1 1.0 true
inv p3 3.0 Pop()
res p2 2.0 true
inv p1 1.1 Pop()
res p3 3.0 1
res p1 1.1 2
";

    #[test]
    fn trace_round_trip() {
        let h = parse_trace(STACK).unwrap();
        assert_eq!(h.operations().len(), 4);
        assert_eq!(parse_trace(&write_trace(&h)).unwrap(), h);
    }

    #[test]
    fn trace_errors_carry_line_numbers() {
        let e = parse_trace("inv p1 1.0 Pop()\ninv p1 1.1 Pop()\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_trace("\n\nres p1 1.0 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse_trace("inv q1 1.0 Pop()").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_trace("inv p1 1.0 Pop(").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_trace("inv p1 1.0 Pop()\nres p2 1.0 3").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn tuples_round_trip() {
        let text = "\
pair p2 2.0 Enq(1)
tuple p1 1.0 Deq() -> 1 view{1.0,2.0}
";
        let set = parse_tuples(text).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.pairs().len(), 2);
        assert_eq!(write_tuples(&set), text);
        assert_eq!(parse_tuples(&write_tuples(&set)).unwrap(), set);
        assert_eq!(parse_tuples("tuple p1 1.0 Deq() -> 1 view{9.9}").unwrap_err().line, 1);
    }
}
