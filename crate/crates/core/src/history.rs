//! Concurrent histories: events, well-formedness, completion, real-time
//! precedence, equivalence, similarity and prefixes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::value::{format_argument, Value};

/// A process index, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(u32);

impl ProcessId {
    /// # Panics
    ///
    /// Panics if `index` is zero.
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "process indices start at 1");
        ProcessId(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based position of this process in per-process arrays.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ProcessId(slot as u32 + 1)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Unique operation identifier: the issuing process and a per-process counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Uid {
    pub process: u32,
    pub seq: u32,
}

impl Uid {
    pub fn new(process: ProcessId, seq: u32) -> Self {
        Uid {
            process: process.index(),
            seq,
        }
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.process, self.seq)
    }
}

/// An invoked operation: who, which instance, what and with which argument.
///
/// The derived order sorts by process index and then uid, which is the
/// tie-break used when rebuilding histories from views.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpDescriptor {
    pub process: ProcessId,
    pub uid: Uid,
    pub label: Arc<str>,
    pub arg: Value,
}

impl OpDescriptor {
    pub fn new(process: ProcessId, uid: Uid, label: &str, arg: Value) -> Self {
        OpDescriptor {
            process,
            uid,
            label: Arc::from(label),
            arg,
        }
    }

    /// `Label(arg)` as written in trace files.
    pub fn call(&self) -> String {
        format!("{}({})", self.label, format_argument(&self.arg))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventKind {
    Invoke,
    Return(Value),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub op: OpDescriptor,
    pub kind: EventKind,
}

impl Event {
    pub fn invoke(op: OpDescriptor) -> Self {
        Event {
            op,
            kind: EventKind::Invoke,
        }
    }

    pub fn ret(op: OpDescriptor, value: Value) -> Self {
        Event {
            op,
            kind: EventKind::Return(value),
        }
    }

    pub fn is_invoke(&self) -> bool {
        matches!(self.kind, EventKind::Invoke)
    }

    pub fn process(&self) -> ProcessId {
        self.op.process
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Invoke => write!(f, "inv {} {} {}", self.op.process, self.op.uid, self.op.call()),
            EventKind::Return(v) => write!(f, "res {} {} {}", self.op.process, self.op.uid, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("event {index}: process invokes while it has a pending operation")]
    NotSequentialPerProcess { index: usize },
    #[error("event {index}: response has no matching pending invocation")]
    ResponseWithoutInvocation { index: usize },
    #[error("event {index}: uid invoked twice")]
    DuplicateUid { index: usize },
    #[error("operation {0} is pending")]
    NotComplete(Uid),
    #[error("operation {0} does not occur in the history")]
    UnknownOperation(Uid),
}

/// Positions of one operation inside a history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpSpan {
    pub op: OpDescriptor,
    pub inv: usize,
    /// Index of the response event and the returned value.
    pub res: Option<(usize, Value)>,
}

impl OpSpan {
    pub fn is_complete(&self) -> bool {
        self.res.is_some()
    }

    pub fn value(&self) -> Option<&Value> {
        self.res.as_ref().map(|(_, v)| v)
    }
}

/// A well-formed finite sequence of invocation and response events.
#[derive(Debug, Clone, Default)]
pub struct History {
    events: Vec<Event>,
    spans: Vec<OpSpan>,
    by_uid: HashMap<Uid, usize>,
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events
    }
}

impl Eq for History {}

impl History {
    pub fn empty() -> Self {
        History::default()
    }

    /// Checks well-formedness and builds the history.
    ///
    /// Every process must alternate invocations and responses, every response
    /// must answer the pending invocation of its process, and no uid may be
    /// invoked twice.
    pub fn validate(events: Vec<Event>) -> Result<Self, HistoryError> {
        let mut pending: HashMap<ProcessId, Uid> = HashMap::new();
        let mut seen: HashSet<Uid> = HashSet::new();
        let mut spans: Vec<OpSpan> = Vec::new();
        let mut by_uid: HashMap<Uid, usize> = HashMap::new();
        for (index, event) in events.iter().enumerate() {
            let p = event.process();
            match &event.kind {
                EventKind::Invoke => {
                    if !seen.insert(event.op.uid) {
                        return Err(HistoryError::DuplicateUid { index });
                    }
                    if pending.contains_key(&p) {
                        return Err(HistoryError::NotSequentialPerProcess { index });
                    }
                    pending.insert(p, event.op.uid);
                    by_uid.insert(event.op.uid, spans.len());
                    spans.push(OpSpan {
                        op: event.op.clone(),
                        inv: index,
                        res: None,
                    });
                }
                EventKind::Return(v) => {
                    let matches = pending.get(&p) == Some(&event.op.uid)
                        && spans[by_uid[&event.op.uid]].op == event.op;
                    if !matches {
                        return Err(HistoryError::ResponseWithoutInvocation { index });
                    }
                    pending.remove(&p);
                    spans[by_uid[&event.op.uid]].res = Some((index, v.clone()));
                }
            }
        }
        Ok(History {
            events,
            spans,
            by_uid,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Operations in invocation order.
    pub fn operations(&self) -> &[OpSpan] {
        &self.spans
    }

    pub fn operation(&self, uid: Uid) -> Option<&OpSpan> {
        self.by_uid.get(&uid).map(|&i| &self.spans[i])
    }

    pub fn pending(&self) -> impl Iterator<Item = &OpSpan> {
        self.spans.iter().filter(|s| !s.is_complete())
    }

    pub fn processes(&self) -> BTreeSet<ProcessId> {
        self.spans.iter().map(|s| s.op.process).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.spans.iter().all(OpSpan::is_complete)
    }

    /// The history without the invocations of its pending operations.
    pub fn comp(&self) -> History {
        let events = self
            .events
            .iter()
            .filter(|e| !e.is_invoke() || self.operation(e.op.uid).is_some_and(OpSpan::is_complete))
            .cloned()
            .collect();
        History::validate(events).expect("completion of a well-formed history is well-formed")
    }

    /// Events of one process, in order.
    pub fn project(&self, p: ProcessId) -> Vec<&Event> {
        self.events.iter().filter(|e| e.process() == p).collect()
    }

    /// `a <_E b`: both complete and the response of `a` precedes the
    /// invocation of `b`.
    pub fn precedes_lt(&self, a: Uid, b: Uid) -> Result<bool, HistoryError> {
        let sa = self.operation(a).ok_or(HistoryError::UnknownOperation(a))?;
        let sb = self.operation(b).ok_or(HistoryError::UnknownOperation(b))?;
        let (ra, _) = sa.res.as_ref().ok_or(HistoryError::NotComplete(a))?;
        if sb.res.is_none() {
            return Err(HistoryError::NotComplete(b));
        }
        Ok(*ra < sb.inv)
    }

    /// `a ≺_E b`: `a` complete and its response precedes the invocation of
    /// `b`, which may be pending.
    pub fn precedes_prec(&self, a: Uid, b: Uid) -> Result<bool, HistoryError> {
        let sa = self.operation(a).ok_or(HistoryError::UnknownOperation(a))?;
        let sb = self.operation(b).ok_or(HistoryError::UnknownOperation(b))?;
        let (ra, _) = sa.res.as_ref().ok_or(HistoryError::NotComplete(a))?;
        Ok(*ra < sb.inv)
    }

    /// All pairs related by `≺`.
    pub fn prec_pairs(&self) -> BTreeSet<(Uid, Uid)> {
        let mut pairs = BTreeSet::new();
        for a in &self.spans {
            let Some((ra, _)) = &a.res else { continue };
            for b in &self.spans {
                if *ra < b.inv {
                    pairs.insert((a.op.uid, b.op.uid));
                }
            }
        }
        pairs
    }

    /// All pairs related by `<` (both ends complete).
    pub fn lt_pairs(&self) -> BTreeSet<(Uid, Uid)> {
        self.prec_pairs()
            .into_iter()
            .filter(|(_, b)| self.operation(*b).is_some_and(OpSpan::is_complete))
            .collect()
    }

    /// The `len + 1` prefixes of the history, shortest first.
    pub fn prefixes(&self) -> impl Iterator<Item = History> + '_ {
        (0..=self.events.len()).map(move |k| self.prefix(k))
    }

    pub fn prefix(&self, k: usize) -> History {
        History::validate(self.events[..k].to_vec()).expect("prefixes of well-formed histories are well-formed")
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

/// `E|p = F|p` for every process `p`.
pub fn equivalent(e: &History, f: &History) -> bool {
    let mut procs = e.processes();
    procs.extend(f.processes());
    procs.iter().all(|&p| e.project(p) == f.project(p))
}

/// How a history was extended to witness similarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityWitness {
    /// The extension `E'`, equivalent to the target.
    pub extended: History,
    /// Pending operations whose invocations were removed.
    pub removed: Vec<Uid>,
    /// Pending operations completed by appending a response.
    pub completed: Vec<(Uid, Value)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotSimilar {
    #[error("process {0} performs different operations in the two histories")]
    Projection(ProcessId),
    #[error("extension keeps {0:?} before {1:?} which the target lets overlap")]
    Precedence(Uid, Uid),
}

/// Decides whether `e` is similar to `f`.
///
/// `e` is similar to `f` when appending responses to some pending operations
/// of `e` and dropping the invocations of some others yields a history
/// equivalent to `f` whose `≺` relation is contained in that of `f`.
/// Per-process equality pins down which pending operations must be dropped,
/// kept or completed, and with which response, so the extension is unique up
/// to the order of appended responses, which does not affect `≺`.
pub fn is_similar(e: &History, f: &History) -> Result<SimilarityWitness, NotSimilar> {
    let mut procs = e.processes();
    procs.extend(f.processes());
    let mut removed = Vec::new();
    let mut completed = Vec::new();
    for &p in &procs {
        let ep = e.project(p);
        let fp = f.project(p);
        let pending = ep.last().filter(|ev| ev.is_invoke()).map(|ev| &ev.op);
        let done = ep.len() - usize::from(pending.is_some());
        if fp.len() < done || ep[..done] != fp[..done] {
            return Err(NotSimilar::Projection(p));
        }
        let rest = &fp[done..];
        match (pending, rest) {
            (None, []) => {}
            (Some(op), []) => removed.push(op.uid),
            (Some(op), [inv]) if inv.is_invoke() && &inv.op == op => {}
            (Some(op), [inv, res]) if inv.is_invoke() && &inv.op == op && res.op == *op => {
                let EventKind::Return(v) = &res.kind else {
                    return Err(NotSimilar::Projection(p));
                };
                completed.push((op.uid, v.clone()));
            }
            _ => return Err(NotSimilar::Projection(p)),
        }
    }
    let removed_set: HashSet<Uid> = removed.iter().copied().collect();
    let mut events: Vec<Event> = e
        .events()
        .iter()
        .filter(|ev| !(ev.is_invoke() && removed_set.contains(&ev.op.uid)))
        .cloned()
        .collect();
    for (uid, v) in &completed {
        let op = e.operation(*uid).expect("completed op comes from e").op.clone();
        events.push(Event::ret(op, v.clone()));
    }
    let extended = History::validate(events).expect("extension of a well-formed history is well-formed");
    debug_assert!(equivalent(&extended, f));
    let target = f.prec_pairs();
    if let Some(&(a, b)) = extended.prec_pairs().iter().find(|pair| !target.contains(pair)) {
        return Err(NotSimilar::Precedence(a, b));
    }
    Ok(SimilarityWitness {
        extended,
        removed,
        completed,
    })
}

/// Incremental builder that assigns uids per process.
#[derive(Debug, Default)]
pub struct HistoryBuilder {
    events: Vec<Event>,
    counters: BTreeMap<ProcessId, u32>,
    open: BTreeMap<ProcessId, OpDescriptor>,
}

impl HistoryBuilder {
    pub fn new() -> Self {
        HistoryBuilder::default()
    }

    /// Records an invocation by `process` and returns its descriptor.
    pub fn invoke(&mut self, process: u32, label: &str, arg: impl Into<ArgValue>) -> OpDescriptor {
        let p = ProcessId::new(process);
        let seq = self.counters.entry(p).or_insert(0);
        let op = OpDescriptor::new(p, Uid::new(p, *seq), label, arg.into().0);
        *seq += 1;
        self.events.push(Event::invoke(op.clone()));
        self.open.insert(p, op.clone());
        op
    }

    /// Records the response of the pending operation of `process`.
    ///
    /// # Panics
    ///
    /// Panics if the process has no pending operation.
    pub fn respond(&mut self, process: u32, value: impl Into<Value>) -> &mut Self {
        let p = ProcessId::new(process);
        let op = self.open.remove(&p).expect("respond without pending invocation");
        self.events.push(Event::ret(op, value.into()));
        self
    }

    pub fn build(self) -> History {
        History::validate(self.events).expect("builder produces well-formed histories")
    }
}

/// Argument wrapper so builder calls can pass `()` for no argument.
pub struct ArgValue(pub Value);

impl From<()> for ArgValue {
    fn from(_: ()) -> Self {
        ArgValue(Value::Unit)
    }
}

impl From<i64> for ArgValue {
    fn from(v: i64) -> Self {
        ArgValue(Value::Int(v))
    }
}

impl From<Value> for ArgValue {
    fn from(v: Value) -> Self {
        ArgValue(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(p: u32, seq: u32, label: &str) -> OpDescriptor {
        OpDescriptor::new(ProcessId::new(p), Uid::new(ProcessId::new(p), seq), label, Value::Unit)
    }

    #[test]
    fn validate_reports_first_violation() {
        let a = op(1, 0, "Pop");
        let b = op(1, 1, "Pop");
        let err = History::validate(vec![Event::invoke(a.clone()), Event::invoke(b)]).unwrap_err();
        assert_eq!(err, HistoryError::NotSequentialPerProcess { index: 1 });

        let err = History::validate(vec![Event::ret(a.clone(), Value::Empty)]).unwrap_err();
        assert_eq!(err, HistoryError::ResponseWithoutInvocation { index: 0 });

        let err = History::validate(vec![
            Event::invoke(a.clone()),
            Event::ret(a.clone(), Value::Empty),
            Event::invoke(a.clone()),
        ])
        .unwrap_err();
        assert_eq!(err, HistoryError::DuplicateUid { index: 2 });

        let other = op(2, 0, "Pop");
        let err = History::validate(vec![Event::invoke(a), Event::ret(other, Value::Empty)]).unwrap_err();
        assert_eq!(err, HistoryError::ResponseWithoutInvocation { index: 1 });
    }

    #[test]
    fn comp_drops_pending_invocations() {
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Push", 2);
        b.invoke(2, "Pop", ());
        b.respond(1, true);
        let h = b.build();
        let c = h.comp();
        assert_eq!(c.len(), 2);
        assert!(c.is_complete());
        assert_eq!(c.comp(), c);
    }

    #[test]
    fn precedence_relations() {
        let mut b = HistoryBuilder::new();
        let push = b.invoke(1, "Push", 2);
        b.respond(1, true);
        let pop = b.invoke(2, "Pop", ());
        let h = b.build();
        assert!(h.precedes_prec(push.uid, pop.uid).unwrap());
        assert_eq!(h.precedes_lt(push.uid, pop.uid), Err(HistoryError::NotComplete(pop.uid)));
        assert_eq!(h.precedes_prec(pop.uid, push.uid), Err(HistoryError::NotComplete(pop.uid)));
        assert_eq!(h.prec_pairs().len(), 1);
        assert!(h.lt_pairs().is_empty());
    }

    #[test]
    fn similarity_completes_with_target_values() {
        // e: p1 Deq pending; f: same op completed with value 1.
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Deq", ());
        let e = b.build();
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Deq", ());
        b.respond(1, 1);
        let f = b.build();
        let w = is_similar(&e, &f).unwrap();
        assert_eq!(w.completed.len(), 1);
        assert_eq!(w.extended, f);
        assert!(is_similar(&f, &e).is_err());
    }

    #[test]
    fn similarity_rejects_added_precedence() {
        // Overlapping ops drop a precedence pair, so only that direction is similar.
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Enq", 1);
        b.respond(1, true);
        b.invoke(2, "Deq", ());
        b.respond(2, 1);
        let sequential = b.build();
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Enq", 1);
        b.invoke(2, "Deq", ());
        b.respond(1, true);
        b.respond(2, 1);
        let overlapping = b.build();
        assert!(is_similar(&overlapping, &sequential).is_ok());
        assert_eq!(
            is_similar(&sequential, &overlapping).unwrap_err(),
            NotSimilar::Precedence(Uid { process: 1, seq: 0 }, Uid { process: 2, seq: 0 })
        );
        assert!(is_similar(&overlapping, &overlapping).is_ok());
        assert!(equivalent(&overlapping, &sequential));
    }

    #[test]
    fn prefixes_count() {
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Inc", ());
        b.respond(1, 1);
        let h = b.build();
        let all: Vec<_> = h.prefixes().collect();
        assert_eq!(all.len(), 3);
        assert!(all[0].is_empty());
        assert_eq!(all[2], h);
    }
}
