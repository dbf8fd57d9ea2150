//! History generators for tests, fuzzing and the acceptance suite.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::history::{Event, History, OpDescriptor, ProcessId, Uid};
use crate::spec::SeqSpec;
use crate::value::Value;
use crate::workload::random_op;

#[derive(Debug, Clone)]
enum Slot {
    Idle,
    Open(OpDescriptor, Option<Value>),
}

/// A linearizable history: every operation takes effect atomically at a
/// random point between its invocation and its response. Some operations
/// may be left pending, with or without having taken effect.
pub fn linearizable_history(spec: &dyn SeqSpec, procs: usize, ops: usize, rng: &mut impl Rng) -> History {
    let procs = procs.max(1);
    let mut state = spec.initial();
    let mut slots = vec![Slot::Idle; procs];
    let mut counters = vec![0u32; procs];
    let mut events = Vec::new();
    let mut issued = 0;
    let mut stopping = vec![false; procs];
    loop {
        let live: Vec<usize> = (0..procs)
            .filter(|&i| !stopping[i] && (issued < ops || matches!(slots[i], Slot::Open(..))))
            .collect();
        let Some(&i) = live.choose(rng) else { break };
        let p = ProcessId::from_slot(i);
        match slots[i].clone() {
            Slot::Idle => {
                let (label, arg) = random_op(spec.name(), p, 2, rng);
                let op = OpDescriptor::new(p, Uid::new(p, counters[i]), &label, arg);
                counters[i] += 1;
                issued += 1;
                events.push(Event::invoke(op.clone()));
                slots[i] = Slot::Open(op, None);
            }
            Slot::Open(op, None) => {
                let choices = spec.transitions(&state, &op.label, &op.arg);
                if let Some((next, resp)) = choices.choose(rng).cloned() {
                    state = next;
                    slots[i] = Slot::Open(op, Some(resp));
                }
            }
            Slot::Open(op, Some(resp)) => {
                events.push(Event::ret(op, resp));
                slots[i] = Slot::Idle;
            }
        }
        if issued >= ops && matches!(slots[i], Slot::Open(..)) && rng.gen_bool(0.15) {
            stopping[i] = true;
        }
    }
    History::validate(events).expect("generator emits well-formed histories")
}

/// Values that may appear as responses of the catalog objects.
fn response_pool() -> Vec<Value> {
    vec![
        Value::Int(0),
        Value::Int(1),
        Value::Int(2),
        Value::Int(3),
        Value::Empty,
        Value::Bool(true),
        Value::Bool(false),
    ]
}

/// A linearizable history in which, with probability one half, one
/// response has been replaced by a random value. The result may or may
/// not be linearizable.
pub fn perturbed_history(spec: &dyn SeqSpec, procs: usize, ops: usize, rng: &mut impl Rng) -> History {
    let h = linearizable_history(spec, procs, ops, rng);
    if !rng.gen_bool(0.5) {
        return h;
    }
    let mut events = h.events().to_vec();
    let responses: Vec<usize> = (0..events.len()).filter(|&i| !events[i].is_invoke()).collect();
    if let Some(&i) = responses.choose(rng) {
        let value = response_pool().choose(rng).cloned().unwrap_or(Value::Unit);
        let op = events[i].op.clone();
        events[i] = Event::ret(op, value);
    }
    History::validate(events).expect("replacing a response keeps well-formedness")
}

/// Event of a history shape: an invocation or response of the i-th operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeEvent {
    Inv(usize),
    Res(usize),
}

/// Precedence pairs and pending operations of one shape.
type ShapeKey = (Vec<(usize, usize)>, Vec<usize>);

/// Every interleaving shape of `k` operations, one process per operation,
/// invoked in index order, up to equal precedence relation and pending set.
pub fn shapes(k: usize) -> Vec<Vec<ShapeEvent>> {
    fn go(
        k: usize,
        next: usize,
        open: &mut Vec<usize>,
        seq: &mut Vec<ShapeEvent>,
        seen: &mut BTreeSet<ShapeKey>,
        out: &mut Vec<Vec<ShapeEvent>>,
    ) {
        if next == k {
            let mut pending = open.clone();
            pending.sort_unstable();
            if seen.insert((shape_precedence(seq), pending)) {
                out.push(seq.clone());
            }
        } else {
            seq.push(ShapeEvent::Inv(next));
            open.push(next);
            go(k, next + 1, open, seq, seen, out);
            open.pop();
            seq.pop();
        }
        for j in 0..open.len() {
            let op = open.remove(j);
            seq.push(ShapeEvent::Res(op));
            go(k, next, open, seq, seen, out);
            seq.pop();
            open.insert(j, op);
        }
    }
    let mut out = Vec::new();
    go(k, 0, &mut Vec::new(), &mut Vec::new(), &mut BTreeSet::new(), &mut out);
    out
}

fn shape_precedence(seq: &[ShapeEvent]) -> Vec<(usize, usize)> {
    let mut done = Vec::new();
    let mut pairs = Vec::new();
    for e in seq {
        match *e {
            ShapeEvent::Res(a) => done.push(a),
            ShapeEvent::Inv(b) => pairs.extend(done.iter().map(|&a| (a, b))),
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Every queue (`container = "queue"`) or stack (`"stack"`) history with
/// at most `max_ops` operations over the values 1 and 2, one process per
/// operation, up to renaming of processes.
///
/// # Panics
///
/// Panics on other container names.
pub fn exhaustive_histories(container: &str, max_ops: usize) -> Vec<History> {
    let (put, take) = match container {
        "queue" => ("Enq", "Deq"),
        "stack" => ("Push", "Pop"),
        other => panic!("no exhaustive generator for `{other}`"),
    };
    let complete_choices: Vec<(&str, Value, Value)> = vec![
        (put, Value::Int(1), Value::Bool(true)),
        (put, Value::Int(2), Value::Bool(true)),
        (take, Value::Unit, Value::Int(1)),
        (take, Value::Unit, Value::Int(2)),
        (take, Value::Unit, Value::Empty),
    ];
    let pending_choices: Vec<(&str, Value)> = vec![(put, Value::Int(1)), (put, Value::Int(2)), (take, Value::Unit)];
    let mut out = Vec::new();
    for k in 0..=max_ops {
        for shape in shapes(k) {
            let complete: Vec<bool> = (0..k).map(|i| shape.contains(&ShapeEvent::Res(i))).collect();
            let radix: Vec<usize> = complete
                .iter()
                .map(|&c| if c { complete_choices.len() } else { pending_choices.len() })
                .collect();
            let total: usize = radix.iter().product();
            for mut code in 0..total {
                let mut pick = vec![0; k];
                for i in 0..k {
                    pick[i] = code % radix[i];
                    code /= radix[i];
                }
                let descr: Vec<(OpDescriptor, Option<Value>)> = (0..k)
                    .map(|i| {
                        let p = ProcessId::from_slot(i);
                        let uid = Uid::new(p, 0);
                        if complete[i] {
                            let (l, a, r) = &complete_choices[pick[i]];
                            (OpDescriptor::new(p, uid, l, a.clone()), Some(r.clone()))
                        } else {
                            let (l, a) = &pending_choices[pick[i]];
                            (OpDescriptor::new(p, uid, l, a.clone()), None)
                        }
                    })
                    .collect();
                let events = shape
                    .iter()
                    .map(|e| match *e {
                        ShapeEvent::Inv(i) => Event::invoke(descr[i].0.clone()),
                        ShapeEvent::Res(i) => {
                            Event::ret(descr[i].0.clone(), descr[i].1.clone().expect("responded ops are complete"))
                        }
                    })
                    .collect();
                out.push(History::validate(events).expect("shapes are well-formed"));
            }
        }
    }
    out
}

/// A history similar to `f`: invocations are moved earlier past responses
/// of other processes, some final responses are dropped and some pending
/// invocations are added.
pub fn similar_variant(f: &History, spec: &dyn SeqSpec, rng: &mut impl Rng) -> History {
    let mut events = f.events().to_vec();
    let swaps = rng.gen_range(0..=events.len() * 2);
    for _ in 0..swaps {
        if events.len() < 2 {
            break;
        }
        let i = rng.gen_range(0..events.len() - 1);
        let (a, b) = (&events[i], &events[i + 1]);
        let allowed = a.process() != b.process() && !(a.is_invoke() && !b.is_invoke());
        if allowed {
            events.swap(i, i + 1);
        }
    }
    let mut last: BTreeMap<ProcessId, usize> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        last.insert(e.process(), i);
    }
    let mut drop: Vec<usize> = last
        .values()
        .copied()
        .filter(|&i| !events[i].is_invoke() && rng.gen_bool(0.3))
        .collect();
    drop.sort_unstable_by(|a, b| b.cmp(a));
    for i in drop {
        events.remove(i);
    }
    let procs: BTreeSet<ProcessId> = events.iter().map(Event::process).collect();
    let extra = ProcessId::from_slot(procs.iter().map(|p| p.slot() + 1).max().unwrap_or(0));
    let mut candidates: Vec<ProcessId> = procs.into_iter().collect();
    candidates.push(extra);
    for p in candidates {
        let last_index = events.iter().rposition(|e| e.process() == p);
        let idle = last_index.is_none_or(|i| !events[i].is_invoke());
        if !idle || !rng.gen_bool(0.3) {
            continue;
        }
        let used: BTreeSet<Uid> = f.operations().iter().map(|s| s.op.uid).collect();
        let seq = (0..).find(|&s| !used.contains(&Uid::new(p, s))).expect("some counter is unused");
        let (label, arg) = random_op(spec.name(), p, 2, rng);
        let op = OpDescriptor::new(p, Uid::new(p, seq), &label, arg);
        let from = last_index.map_or(0, |i| i + 1);
        let at = rng.gen_range(from..=events.len());
        events.insert(at, Event::invoke(op));
    }
    History::validate(events).expect("moves preserve well-formedness")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::is_similar;
    use crate::membership::is_linearizable;
    use crate::spec::by_name;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_counts() {
        assert_eq!(shapes(0).len(), 1);
        // one op: pending or complete
        assert_eq!(shapes(1).len(), 2);
        // two ops: a<b, a||b, each with any pending set that the order allows
        assert_eq!(shapes(2).len(), 6);
    }

    #[test]
    fn generated_histories_are_linearizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in crate::spec::CATALOG {
            let spec = by_name(name).unwrap();
            for _ in 0..30 {
                let h = linearizable_history(spec.as_ref(), 3, 6, &mut rng);
                assert!(is_linearizable(&h, spec.as_ref()).is_ok(), "{name}\n{h}");
            }
        }
    }

    #[test]
    fn variants_are_similar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = by_name("queue").unwrap();
        for _ in 0..200 {
            let f = linearizable_history(spec.as_ref(), 3, 6, &mut rng);
            let e = similar_variant(&f, spec.as_ref(), &mut rng);
            assert!(is_similar(&e, &f).is_ok(), "{e}\nvs\n{f}");
        }
    }
}
