//! Views, response tuples and the reconstruction of histories from them.
//!
//! A wrapped operation returns its response together with a view: the set of
//! operations announced before it took its snapshot. Sorting the distinct
//! views of a tuple set by containment yields blocks of invocations and
//! responses, which [`build_history`] turns back into a history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{Event, EventKind, History, HistoryError, OpDescriptor, Uid};
use crate::sim::log::{Action, Layer, RecordedExecution};
use crate::value::Value;

/// The operations a snapshot observed as announced.
pub type View = BTreeSet<OpDescriptor>;

/// One completed wrapped operation: what it was, what it returned and what it saw.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ResponseTuple {
    pub op: OpDescriptor,
    pub value: Value,
    pub view: Arc<View>,
}

impl ResponseTuple {
    pub fn new(op: OpDescriptor, value: Value, view: impl Into<Arc<View>>) -> Self {
        ResponseTuple {
            op,
            value,
            view: view.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tuple set already holds a different tuple for {0}")]
pub struct ConflictingTuple(pub Uid);

/// A set of response tuples keyed by operation uid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TupleSet {
    tuples: BTreeMap<Uid, ResponseTuple>,
}

impl TupleSet {
    pub fn new() -> Self {
        TupleSet::default()
    }

    pub fn insert(&mut self, tuple: ResponseTuple) -> Result<(), ConflictingTuple> {
        match self.tuples.get(&tuple.op.uid) {
            Some(existing) if *existing != tuple => Err(ConflictingTuple(tuple.op.uid)),
            Some(_) => Ok(()),
            None => {
                self.tuples.insert(tuple.op.uid, tuple);
                Ok(())
            }
        }
    }

    pub fn union_with(&mut self, other: &TupleSet) -> Result<(), ConflictingTuple> {
        for t in other.iter() {
            self.insert(t.clone())?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResponseTuple> {
        self.tuples.values()
    }

    pub fn get(&self, uid: Uid) -> Option<&ResponseTuple> {
        self.tuples.get(&uid)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Every operation mentioned by a tuple or inside a view.
    pub fn pairs(&self) -> BTreeSet<OpDescriptor> {
        let mut all = BTreeSet::new();
        for t in self.iter() {
            all.insert(t.op.clone());
            all.extend(t.view.iter().cloned());
        }
        all
    }
}

impl FromIterator<ResponseTuple> for TupleSet {
    fn from_iter<I: IntoIterator<Item = ResponseTuple>>(iter: I) -> Self {
        let mut set = TupleSet::new();
        for t in iter {
            set.tuples.insert(t.op.uid, t);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViewError {
    #[error("view of {0} does not contain the operation itself")]
    SelfInclusion(Uid),
    #[error("views of {0} and {1} are not related by containment")]
    Containment(Uid, Uid),
    #[error("{0} and {1} of the same process each see the other")]
    ProcessSequentiality(Uid, Uid),
    #[error("{0} appears with two different descriptors")]
    ConflictingPair(Uid),
    #[error("reconstructed history is not well-formed: {0}")]
    NotWellFormed(HistoryError),
}

/// Checks self-inclusion, containment and per-process sequentiality of views.
pub fn validate_views(set: &TupleSet) -> Result<(), ViewError> {
    let mut descriptors: BTreeMap<Uid, &OpDescriptor> = BTreeMap::new();
    for t in set.iter() {
        for op in std::iter::once(&t.op).chain(t.view.iter()) {
            if *descriptors.entry(op.uid).or_insert(op) != op {
                return Err(ViewError::ConflictingPair(op.uid));
            }
        }
    }
    for t in set.iter() {
        if !t.view.contains(&t.op) {
            return Err(ViewError::SelfInclusion(t.op.uid));
        }
    }
    let mut by_size: Vec<&ResponseTuple> = set.iter().collect();
    by_size.sort_by_key(|t| t.view.len());
    for w in by_size.windows(2) {
        if !w[0].view.is_subset(&w[1].view) {
            return Err(ViewError::Containment(w[0].op.uid, w[1].op.uid));
        }
    }
    let mut by_process: BTreeMap<_, Vec<&ResponseTuple>> = BTreeMap::new();
    for t in set.iter() {
        by_process.entry(t.op.process).or_default().push(t);
    }
    for tuples in by_process.values() {
        for (i, a) in tuples.iter().enumerate() {
            for b in &tuples[i + 1..] {
                if a.view.contains(&b.op) && b.view.contains(&a.op) {
                    return Err(ViewError::ProcessSequentiality(a.op.uid, b.op.uid));
                }
            }
        }
    }
    Ok(())
}

/// Order of events inside one block of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrder {
    /// Sorted by process index, then uid.
    Canonical,
    /// A seeded shuffle of the invocations and of the responses of each block.
    Shuffled(u64),
}

/// Rebuilds the history described by a tuple set.
///
/// For each distinct view in increasing order, the invocations of the newly
/// seen operations come first, then the responses of the tuples carrying that
/// view. Operations that only appear inside views stay pending.
pub fn build_history(set: &TupleSet) -> Result<History, ViewError> {
    build_history_with(set, BlockOrder::Canonical)
}

pub fn build_history_with(set: &TupleSet, order: BlockOrder) -> Result<History, ViewError> {
    validate_views(set)?;
    let mut blocks: BTreeMap<usize, (Arc<View>, Vec<&ResponseTuple>)> = BTreeMap::new();
    for t in set.iter() {
        blocks.entry(t.view.len()).or_insert_with(|| (t.view.clone(), Vec::new())).1.push(t);
    }
    let mut rng = match order {
        BlockOrder::Canonical => None,
        BlockOrder::Shuffled(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut seen: BTreeSet<&OpDescriptor> = BTreeSet::new();
    let mut events = Vec::new();
    let holders: Vec<_> = blocks.into_values().collect();
    for (view, tuples) in &holders {
        let mut invs: Vec<&OpDescriptor> = view.iter().filter(|op| !seen.contains(op)).collect();
        seen.extend(invs.iter().copied());
        let mut responses = tuples.clone();
        if let Some(rng) = rng.as_mut() {
            invs.shuffle(rng);
            responses.shuffle(rng);
        }
        events.extend(invs.into_iter().map(|op| Event::invoke(op.clone())));
        events.extend(responses.into_iter().map(|t| Event::ret(t.op.clone(), t.value.clone())));
    }
    History::validate(events).map_err(ViewError::NotWellFormed)
}

/// Drops the invocations of pending operations that no view mentions.
pub fn visible_part(h: &History, set: &TupleSet) -> History {
    let pairs = set.pairs();
    let events = h
        .events()
        .iter()
        .filter(|e| e.kind != EventKind::Invoke || pairs.contains(&e.op) || h.operation(e.op.uid).is_some_and(|s| s.is_complete()))
        .cloned()
        .collect();
    History::validate(events).expect("dropping pending invocations keeps a history well-formed")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MalformedLog {
    #[error("operation {0} took a snapshot without announcing itself")]
    SnapshotWithoutAnnounce(Uid),
    #[error("operation {0} took a snapshot before its inner call returned")]
    MissingInnerResponse(Uid),
    #[error("operation {0} announced twice")]
    DuplicateAnnounce(Uid),
    #[error("operation {0} returned a view that differs from the announce log")]
    ViewMismatch(Uid),
    #[error("rebuilt history is not well-formed: {0}")]
    NotWellFormed(HistoryError),
}

/// Announce and snapshot positions of the wrapped operations of an execution.
struct WrapperTrace {
    announced: BTreeMap<Uid, (u64, OpDescriptor)>,
    inner_value: BTreeMap<Uid, Value>,
    snapshots: Vec<(Uid, u64, Arc<View>)>,
}

impl WrapperTrace {
    fn read(rec: &RecordedExecution) -> Result<Self, MalformedLog> {
        let mut announced = BTreeMap::new();
        let mut inner_value = BTreeMap::new();
        let mut snapshots = Vec::new();
        for r in rec.records() {
            match &r.action {
                Action::Announced { op } => {
                    if announced.insert(op.uid, (r.step, op.clone())).is_some() {
                        return Err(MalformedLog::DuplicateAnnounce(op.uid));
                    }
                }
                Action::Respond {
                    layer: Layer::Inner,
                    op,
                    value,
                } => {
                    inner_value.insert(op.uid, value.clone());
                }
                Action::ViewTaken { op, lp, view } => {
                    if !announced.contains_key(op) {
                        return Err(MalformedLog::SnapshotWithoutAnnounce(*op));
                    }
                    if !inner_value.contains_key(op) {
                        return Err(MalformedLog::MissingInnerResponse(*op));
                    }
                    snapshots.push((*op, *lp, view.clone()));
                }
                _ => {}
            }
        }
        Ok(WrapperTrace {
            announced,
            inner_value,
            snapshots,
        })
    }

    fn view_at(&self, lp: u64) -> View {
        self.announced
            .values()
            .filter(|(step, _)| *step <= lp)
            .map(|(_, op)| op.clone())
            .collect()
    }
}

/// The tight history of the wrapped layer of an execution.
///
/// Pending operations that never announced are dropped, every invocation is
/// placed at its announce write and every response at the linearization
/// point of its snapshot.
pub fn tighten(rec: &RecordedExecution) -> Result<History, MalformedLog> {
    let trace = WrapperTrace::read(rec)?;
    let mut placed: Vec<(u64, u8, Uid, Event)> = Vec::new();
    for (uid, (step, op)) in &trace.announced {
        placed.push((*step, 0, *uid, Event::invoke(op.clone())));
    }
    for (uid, lp, _) in &trace.snapshots {
        let op = trace.announced[uid].1.clone();
        placed.push((*lp, 1, *uid, Event::ret(op, trace.inner_value[uid].clone())));
    }
    placed.sort_by_key(|a| (a.0, a.1, a.3.op.process, a.2));
    History::validate(placed.into_iter().map(|p| p.3).collect()).map_err(MalformedLog::NotWellFormed)
}

/// The tuple set of an execution, with views read from the announce log.
pub fn lambda_of(rec: &RecordedExecution) -> Result<TupleSet, MalformedLog> {
    let trace = WrapperTrace::read(rec)?;
    Ok(trace
        .snapshots
        .iter()
        .map(|(uid, lp, _)| {
            ResponseTuple::new(
                trace.announced[uid].1.clone(),
                trace.inner_value[uid].clone(),
                trace.view_at(*lp),
            )
        })
        .collect())
}

/// Checks that every view a wrapped operation returned matches the announce log.
pub fn check_returned_views(rec: &RecordedExecution) -> Result<(), MalformedLog> {
    let trace = WrapperTrace::read(rec)?;
    for (uid, lp, view) in &trace.snapshots {
        if **view != trace.view_at(*lp) {
            return Err(MalformedLog::ViewMismatch(*uid));
        }
    }
    Ok(())
}

impl fmt::Display for ResponseTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tuple {} {} {} -> {} view{{", self.op.process, self.op.uid, self.op.call(), self.value)?;
        for (i, op) in self.view.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", op.uid)?;
        }
        f.write_str("}")
    }
}
