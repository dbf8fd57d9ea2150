//! Sequential specifications and the catalog of shipped objects.
//!
//! States are [`Value`]s so that every object can be memoized uniformly. A
//! transition function may return several `(state, response)` pairs
//! (nondeterminism) or none (the operation is not allowed in that state).

use std::fmt;
use std::sync::Arc;

use crate::history::OpDescriptor;
use crate::value::Value;

pub trait SeqSpec: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn initial(&self) -> Value;

    /// All `(next state, response)` pairs allowed for `label(arg)` in `state`.
    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)>;

    /// Convenience for deterministic objects: the first allowed transition.
    fn apply(&self, state: &Value, label: &str, arg: &Value) -> Option<(Value, Value)> {
        self.transitions(state, label, arg).into_iter().next()
    }
}

/// A sequence of completed operations, in order.
pub type SeqHistory = Vec<(OpDescriptor, Value)>;

/// Whether the object admits the sequential history from its initial state.
pub fn accepts(spec: &dyn SeqSpec, seq: &[(OpDescriptor, Value)]) -> bool {
    let mut states = vec![spec.initial()];
    for (op, expected) in seq {
        let mut next: Vec<Value> = states
            .iter()
            .flat_map(|s| spec.transitions(s, &op.label, &op.arg))
            .filter(|(_, v)| v == expected)
            .map(|(s, _)| s)
            .collect();
        next.sort();
        next.dedup();
        if next.is_empty() {
            return false;
        }
        states = next;
    }
    true
}

fn list(state: &Value) -> Vec<Value> {
    state.as_list().map(<[Value]>::to_vec).unwrap_or_default()
}

/// FIFO queue: `Enq(v) -> true`, `Deq() -> v | empty`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Queue;

impl SeqSpec for Queue {
    fn name(&self) -> &str {
        "queue"
    }

    fn initial(&self) -> Value {
        Value::List(Vec::new())
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        let mut items = list(state);
        match label {
            "Enq" => {
                items.push(arg.clone());
                vec![(Value::List(items), Value::Bool(true))]
            }
            "Deq" if items.is_empty() => vec![(state.clone(), Value::Empty)],
            "Deq" => {
                let head = items.remove(0);
                vec![(Value::List(items), head)]
            }
            _ => Vec::new(),
        }
    }
}

/// LIFO stack: `Push(v) -> true`, `Pop() -> v | empty`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Stack;

impl SeqSpec for Stack {
    fn name(&self) -> &str {
        "stack"
    }

    fn initial(&self) -> Value {
        Value::List(Vec::new())
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        let mut items = list(state);
        match label {
            "Push" => {
                items.push(arg.clone());
                vec![(Value::List(items), Value::Bool(true))]
            }
            "Pop" => match items.pop() {
                Some(top) => vec![(Value::List(items), top)],
                None => vec![(state.clone(), Value::Empty)],
            },
            _ => Vec::new(),
        }
    }
}

/// Set: `Add(v)`, `Remove(v)` and `Contains(v)`, each returning whether the
/// element was (or is) present in the sense of the operation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Set;

impl SeqSpec for Set {
    fn name(&self) -> &str {
        "set"
    }

    fn initial(&self) -> Value {
        Value::List(Vec::new())
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        let mut items = list(state);
        let found = items.binary_search(arg);
        match (label, found) {
            ("Add", Ok(_)) => vec![(state.clone(), Value::Bool(false))],
            ("Add", Err(at)) => {
                items.insert(at, arg.clone());
                vec![(Value::List(items), Value::Bool(true))]
            }
            ("Remove", Ok(at)) => {
                items.remove(at);
                vec![(Value::List(items), Value::Bool(true))]
            }
            ("Remove", Err(_)) => vec![(state.clone(), Value::Bool(false))],
            ("Contains", found) => vec![(state.clone(), Value::Bool(found.is_ok()))],
            _ => Vec::new(),
        }
    }
}

/// Counter: `Inc()` returns the new count, `Read()` the current one.
#[derive(Debug, Default, Clone, Copy)]
pub struct Counter;

impl SeqSpec for Counter {
    fn name(&self) -> &str {
        "counter"
    }

    fn initial(&self) -> Value {
        Value::Int(0)
    }

    fn transitions(&self, state: &Value, label: &str, _arg: &Value) -> Vec<(Value, Value)> {
        let count = state.as_int().unwrap_or(0);
        match label {
            "Inc" => vec![(Value::Int(count + 1), Value::Int(count + 1))],
            "Read" => vec![(state.clone(), state.clone())],
            _ => Vec::new(),
        }
    }
}

/// Read/write register holding `0` initially: `Write(v) -> true`, `Read() -> v`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Register;

impl SeqSpec for Register {
    fn name(&self) -> &str {
        "register"
    }

    fn initial(&self) -> Value {
        Value::Int(0)
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        match label {
            "Write" => vec![(arg.clone(), Value::Bool(true))],
            "Read" => vec![(state.clone(), state.clone())],
            _ => Vec::new(),
        }
    }
}

/// Min-priority queue over integers: `Ins(v) -> true`, `ExtractMin() -> v | empty`.
#[derive(Debug, Default, Clone, Copy)]
pub struct PriorityQueue;

impl SeqSpec for PriorityQueue {
    fn name(&self) -> &str {
        "pqueue"
    }

    fn initial(&self) -> Value {
        Value::List(Vec::new())
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        let mut items = list(state);
        match label {
            "Ins" => {
                let at = items.partition_point(|x| x <= arg);
                items.insert(at, arg.clone());
                vec![(Value::List(items), Value::Bool(true))]
            }
            "ExtractMin" if items.is_empty() => vec![(state.clone(), Value::Empty)],
            "ExtractMin" => {
                let min = items.remove(0);
                vec![(Value::List(items), min)]
            }
            _ => Vec::new(),
        }
    }
}

/// Consensus: the first `Decide(v)` fixes `v`, every decision returns it.
#[derive(Debug, Default, Clone, Copy)]
pub struct Consensus;

impl SeqSpec for Consensus {
    fn name(&self) -> &str {
        "consensus"
    }

    fn initial(&self) -> Value {
        Value::Empty
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        match (label, state) {
            ("Decide", Value::Empty) => vec![(arg.clone(), arg.clone())],
            ("Decide", decided) => vec![(decided.clone(), decided.clone())],
            _ => Vec::new(),
        }
    }
}

/// Single-writer atomic snapshot over `n` components, all `0` initially.
///
/// `Update(v)` by process `p` writes component `p`; `Scan()` returns the
/// whole vector.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub components: usize,
}

impl Snapshot {
    pub fn new(components: usize) -> Self {
        Snapshot { components }
    }
}

impl SeqSpec for Snapshot {
    fn name(&self) -> &str {
        "snapshot"
    }

    fn initial(&self) -> Value {
        Value::List(vec![Value::Int(0); self.components])
    }

    fn transitions(&self, state: &Value, label: &str, arg: &Value) -> Vec<(Value, Value)> {
        match label {
            "Scan" => vec![(state.clone(), state.clone())],
            // The writer is folded into the argument as `[process, value]`.
            "Update" => {
                let Some([Value::Int(p), v]) = arg.as_list().and_then(|a| <&[Value; 2]>::try_from(a).ok()) else {
                    return Vec::new();
                };
                let mut items = list(state);
                match usize::try_from(*p).ok().filter(|&p| p >= 1 && p <= items.len()) {
                    Some(p) => {
                        items[p - 1] = v.clone();
                        vec![(Value::List(items), Value::Bool(true))]
                    }
                    None => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }
}

/// Names accepted by [`by_name`], in catalog order.
pub const CATALOG: [&str; 7] = ["queue", "stack", "set", "counter", "register", "pqueue", "consensus"];

/// Every catalog object.
pub fn catalog() -> Vec<Arc<dyn SeqSpec>> {
    CATALOG.iter().map(|n| by_name(n).expect("catalog names resolve")).collect()
}

/// Looks up a catalog object; `snapshot:<n>` selects an `n`-component snapshot.
pub fn by_name(name: &str) -> Option<Arc<dyn SeqSpec>> {
    let spec: Arc<dyn SeqSpec> = match name {
        "queue" => Arc::new(Queue),
        "stack" => Arc::new(Stack),
        "set" => Arc::new(Set),
        "counter" => Arc::new(Counter),
        "register" => Arc::new(Register),
        "pqueue" => Arc::new(PriorityQueue),
        "consensus" => Arc::new(Consensus),
        other => {
            let n = other.strip_prefix("snapshot:")?.parse().ok().filter(|&n| n >= 1)?;
            Arc::new(Snapshot::new(n))
        }
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{ProcessId, Uid};

    fn seq(calls: &[(&str, Value, Value)]) -> SeqHistory {
        let p = ProcessId::new(1);
        calls
            .iter()
            .enumerate()
            .map(|(i, (label, arg, res))| (OpDescriptor::new(p, Uid::new(p, i as u32), label, arg.clone()), res.clone()))
            .collect()
    }

    #[test]
    fn stack_accepts_lifo_order() {
        let ok = seq(&[
            ("Push", 2.into(), true.into()),
            ("Push", 1.into(), true.into()),
            ("Pop", Value::Unit, 1.into()),
            ("Pop", Value::Unit, 2.into()),
        ]);
        assert!(accepts(&Stack, &ok));
        let bad = seq(&[("Push", 1.into(), true.into()), ("Pop", Value::Unit, Value::Empty)]);
        assert!(!accepts(&Stack, &bad));
    }

    #[test]
    fn queue_is_fifo() {
        let ok = seq(&[
            ("Enq", 1.into(), true.into()),
            ("Enq", 2.into(), true.into()),
            ("Deq", Value::Unit, 1.into()),
            ("Deq", Value::Unit, 2.into()),
            ("Deq", Value::Unit, Value::Empty),
        ]);
        assert!(accepts(&Queue, &ok));
        assert!(!accepts(&Queue, &seq(&[("Deq", Value::Unit, 1.into())])));
    }

    #[test]
    fn counter_and_consensus() {
        let c = seq(&[("Inc", Value::Unit, 1.into()), ("Inc", Value::Unit, 2.into()), ("Read", Value::Unit, 2.into())]);
        assert!(accepts(&Counter, &c));
        let d = seq(&[("Decide", 4.into(), 4.into()), ("Decide", 7.into(), 4.into())]);
        assert!(accepts(&Consensus, &d));
        let d = seq(&[("Decide", 4.into(), 4.into()), ("Decide", 7.into(), 7.into())]);
        assert!(!accepts(&Consensus, &d));
    }

    #[test]
    fn set_pqueue_register() {
        let s = seq(&[
            ("Add", 3.into(), true.into()),
            ("Add", 3.into(), false.into()),
            ("Contains", 3.into(), true.into()),
            ("Remove", 3.into(), true.into()),
            ("Contains", 3.into(), false.into()),
        ]);
        assert!(accepts(&Set, &s));
        let q = seq(&[
            ("Ins", 5.into(), true.into()),
            ("Ins", 2.into(), true.into()),
            ("ExtractMin", Value::Unit, 2.into()),
            ("ExtractMin", Value::Unit, 5.into()),
            ("ExtractMin", Value::Unit, Value::Empty),
        ]);
        assert!(accepts(&PriorityQueue, &q));
        let r = seq(&[("Read", Value::Unit, 0.into()), ("Write", 9.into(), true.into()), ("Read", Value::Unit, 9.into())]);
        assert!(accepts(&Register, &r));
    }

    #[test]
    fn snapshot_components() {
        let spec = Snapshot::new(2);
        let upd = Value::List(vec![2.into(), 7.into()]);
        let s = seq(&[
            ("Update", upd, true.into()),
            ("Scan", Value::Unit, Value::List(vec![0.into(), 7.into()])),
        ]);
        assert!(accepts(&spec, &s));
        assert!(spec.transitions(&spec.initial(), "Update", &Value::Int(3)).is_empty());
    }

    #[derive(Debug)]
    struct AnyBit;

    impl SeqSpec for AnyBit {
        fn name(&self) -> &str {
            "any-bit"
        }
        fn initial(&self) -> Value {
            Value::Unit
        }
        fn transitions(&self, _: &Value, label: &str, _: &Value) -> Vec<(Value, Value)> {
            match label {
                "Flip" => vec![(Value::Int(0), Value::Int(0)), (Value::Int(1), Value::Int(1))],
                "Get" => Vec::new(),
                _ => Vec::new(),
            }
        }
    }

    #[test]
    fn nondeterministic_and_partial() {
        let s = seq(&[("Flip", Value::Unit, 1.into()), ("Flip", Value::Unit, 0.into())]);
        assert!(accepts(&AnyBit, &s));
        assert!(!accepts(&AnyBit, &seq(&[("Get", Value::Unit, 0.into())])));
    }

    #[test]
    fn catalog_lookup() {
        assert_eq!(catalog().len(), CATALOG.len());
        assert_eq!(by_name("snapshot:3").unwrap().initial().as_list().unwrap().len(), 3);
        assert!(by_name("snapshot:0").is_none());
        assert!(by_name("heap").is_none());
    }
}
