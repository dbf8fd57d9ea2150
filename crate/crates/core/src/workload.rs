//! Where processes get their next operation from.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::ProcessId;
use crate::value::Value;

pub trait OpSource: Send {
    /// Label and argument of the next operation of `p`, or `None` when `p`
    /// has nothing more to do.
    fn next_op(&mut self, p: ProcessId) -> Option<(String, Value)>;
}

/// A random operation of the named object, with values drawn from `1..=domain`.
///
/// # Panics
///
/// Panics on names outside the catalog and `snapshot`.
pub fn random_op(spec: &str, p: ProcessId, domain: i64, rng: &mut impl Rng) -> (String, Value) {
    let v = Value::Int(rng.gen_range(1..=domain.max(1)));
    let coin = rng.gen_bool(0.5);
    let (label, arg) = match spec {
        "queue" => if coin { ("Enq", v) } else { ("Deq", Value::Unit) },
        "stack" => if coin { ("Push", v) } else { ("Pop", Value::Unit) },
        "pqueue" => if coin { ("Ins", v) } else { ("ExtractMin", Value::Unit) },
        "set" => match rng.gen_range(0..3) {
            0 => ("Add", v),
            1 => ("Remove", v),
            _ => ("Contains", v),
        },
        "counter" => if coin { ("Inc", Value::Unit) } else { ("Read", Value::Unit) },
        "register" => if coin { ("Write", v) } else { ("Read", Value::Unit) },
        "consensus" => ("Decide", v),
        s if s == "snapshot" || s.starts_with("snapshot:") => {
            if coin {
                ("Update", Value::List(vec![Value::Int(p.index() as i64), v]))
            } else {
                ("Scan", Value::Unit)
            }
        }
        other => panic!("no operation mix for `{other}`"),
    };
    (label.to_string(), arg)
}

/// Seeded random operations, optionally at most `limit` per process.
#[derive(Debug, Clone)]
pub struct RandomOps {
    spec: String,
    rng: ChaCha8Rng,
    domain: i64,
    limit: Option<usize>,
    issued: BTreeMap<ProcessId, usize>,
}

impl RandomOps {
    pub fn new(spec: &str, seed: u64) -> Self {
        RandomOps {
            spec: spec.to_string(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            domain: 3,
            limit: None,
            issued: BTreeMap::new(),
        }
    }

    pub fn with_limit(mut self, per_process: usize) -> Self {
        self.limit = Some(per_process);
        self
    }

    pub fn with_domain(mut self, domain: i64) -> Self {
        self.domain = domain;
        self
    }
}

impl OpSource for RandomOps {
    fn next_op(&mut self, p: ProcessId) -> Option<(String, Value)> {
        let issued = self.issued.entry(p).or_insert(0);
        if self.limit.is_some_and(|l| *issued >= l) {
            return None;
        }
        *issued += 1;
        Some(random_op(&self.spec, p, self.domain, &mut self.rng))
    }
}

/// Fixed per-process operation lists, then an optional repeated fallback.
#[derive(Debug, Clone, Default)]
pub struct ScriptedOps {
    scripts: BTreeMap<ProcessId, VecDeque<(String, Value)>>,
    then: Option<(String, Value)>,
}

impl ScriptedOps {
    pub fn new() -> Self {
        ScriptedOps::default()
    }

    pub fn script(mut self, p: u32, ops: &[(&str, Value)]) -> Self {
        self.scripts
            .entry(ProcessId::new(p))
            .or_default()
            .extend(ops.iter().map(|(l, v)| (l.to_string(), v.clone())));
        self
    }

    /// Operation every process repeats once its script is used up.
    pub fn then_repeat(mut self, label: &str, arg: Value) -> Self {
        self.then = Some((label.to_string(), arg));
        self
    }
}

impl OpSource for ScriptedOps {
    fn next_op(&mut self, p: ProcessId) -> Option<(String, Value)> {
        self.scripts
            .get_mut(&p)
            .and_then(VecDeque::pop_front)
            .or_else(|| self.then.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limits_and_scripts() {
        let mut ops = RandomOps::new("queue", 1).with_limit(2);
        let p = ProcessId::new(1);
        assert!(ops.next_op(p).is_some());
        assert!(ops.next_op(p).is_some());
        assert!(ops.next_op(p).is_none());
        assert!(ops.next_op(ProcessId::new(2)).is_some());

        let mut s = ScriptedOps::new().script(1, &[("Deq", Value::Unit)]).then_repeat("Deq", Value::Unit);
        assert_eq!(s.next_op(p).unwrap().0, "Deq");
        assert_eq!(s.next_op(ProcessId::new(2)).unwrap().0, "Deq");
        assert!(ScriptedOps::new().next_op(p).is_none());
    }

    #[test]
    fn every_catalog_object_has_a_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for name in crate::spec::CATALOG.iter().chain(&["snapshot:2"]) {
            let spec = crate::spec::by_name(name).unwrap();
            for _ in 0..20 {
                let (label, arg) = random_op(name, ProcessId::new(2), 3, &mut rng);
                assert!(!spec.transitions(&spec.initial(), &label, &arg).is_empty(), "{name} {label}");
            }
        }
    }
}
