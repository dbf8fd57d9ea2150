//! Step log of a simulated execution.

use std::sync::Arc;

use crate::history::{Event, History, HistoryError, OpDescriptor, ProcessId, Uid};
use crate::value::Value;
use crate::verifier::Verdict;
use crate::views::View;

/// Which object an invocation or response belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    /// The wrapped implementation.
    Inner,
    /// The view-returning wrapper around it.
    Star,
    /// The self-enforced object whose responses are `OK` or `ERROR`.
    Enforced,
    /// A stand-alone object such as the snapshot under self-test.
    Object,
}

/// Shared-memory regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    /// Announce array of the wrapper.
    Announce,
    /// Response-tuple array of the verifier.
    Results,
    /// Array of a stand-alone snapshot object.
    Object,
    /// The base objects of the inner implementation.
    Inner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Loc {
    pub region: Region,
    pub cell: usize,
}

/// Kind of a scheduled step, for audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    /// Invocation or response event; no shared-memory access.
    Local,
    Read,
    Write,
    /// A whole array read in one step.
    AtomicSnapshot,
    /// A step on a base object of the inner implementation.
    InnerAccess,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Invoke {
        layer: Layer,
        op: OpDescriptor,
    },
    Respond {
        layer: Layer,
        op: OpDescriptor,
        value: Value,
    },
    Read(Loc),
    Write(Loc),
    Snapshot(Region),
    InnerAccess(ProcessId),
    /// Annotation: the write of this step announced `op`.
    Announced {
        op: OpDescriptor,
    },
    /// Annotation: `op` finished its snapshot, linearized at step `lp`.
    ViewTaken {
        op: Uid,
        lp: u64,
        view: Arc<View>,
    },
    /// Annotation: a verifier decided.
    Verdict {
        op: Option<Uid>,
        verdict: Verdict,
    },
}

impl Action {
    /// `None` for annotations, which do not consume a step.
    pub fn primitive(&self) -> Option<Primitive> {
        match self {
            Action::Invoke { .. } | Action::Respond { .. } => Some(Primitive::Local),
            Action::Read(_) => Some(Primitive::Read),
            Action::Write(_) => Some(Primitive::Write),
            Action::Snapshot(_) => Some(Primitive::AtomicSnapshot),
            Action::InnerAccess(_) => Some(Primitive::InnerAccess),
            Action::Announced { .. } | Action::ViewTaken { .. } | Action::Verdict { .. } => None,
        }
    }

    /// Region touched by a shared-memory step.
    pub fn region(&self) -> Option<Region> {
        match self {
            Action::Read(loc) | Action::Write(loc) => Some(loc.region),
            Action::Snapshot(region) => Some(*region),
            Action::InnerAccess(_) => Some(Region::Inner),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Global index of the step this record belongs to.
    pub step: u64,
    pub process: ProcessId,
    pub action: Action,
}

/// A verdict together with where and when it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRecord {
    pub step: u64,
    pub process: ProcessId,
    pub op: Option<Uid>,
    pub verdict: Verdict,
}

/// Everything that happened in one run, in real-time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordedExecution {
    processes: usize,
    records: Vec<Record>,
}

impl RecordedExecution {
    pub fn new(processes: usize) -> Self {
        RecordedExecution {
            processes,
            records: Vec::new(),
        }
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub(crate) fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    /// Number of scheduled steps.
    pub fn steps(&self) -> u64 {
        self.records.iter().filter(|r| r.action.primitive().is_some()).count() as u64
    }

    /// The history of one layer.
    pub fn history(&self, layer: Layer) -> Result<History, HistoryError> {
        let events = self
            .records
            .iter()
            .filter_map(|r| match &r.action {
                Action::Invoke { layer: l, op } if *l == layer => Some(Event::invoke(op.clone())),
                Action::Respond { layer: l, op, value } if *l == layer => Some(Event::ret(op.clone(), value.clone())),
                _ => None,
            })
            .collect();
        History::validate(events)
    }

    /// Step index at which each event of [`RecordedExecution::history`] occurred.
    pub fn event_steps(&self, layer: Layer) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| matches!(&r.action, Action::Invoke { layer: l, .. } | Action::Respond { layer: l, .. } if *l == layer))
            .map(|r| r.step)
            .collect()
    }

    pub fn verdicts(&self) -> Vec<VerdictRecord> {
        self.records
            .iter()
            .filter_map(|r| match &r.action {
                Action::Verdict { op, verdict } => Some(VerdictRecord {
                    step: r.step,
                    process: r.process,
                    op: *op,
                    verdict: verdict.clone(),
                }),
                _ => None,
            })
            .collect()
    }

    /// Records of one process, in order.
    pub fn of(&self, p: ProcessId) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.process == p)
    }
}
