//! Step accounting over recorded executions.

use std::collections::BTreeMap;

use crate::history::{ProcessId, Uid};
use crate::sim::{Action, Layer, Primitive, Record, RecordedExecution, Region};

/// Shared-memory steps one operation spent outside the inner implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCost {
    pub process: ProcessId,
    pub op: Uid,
    /// Reads, writes and snapshots of the announce and result arrays.
    pub bookkeeping: usize,
}

/// Costs of every completed wrapped operation (invocation to response) and
/// of every completed verification iteration (invocation to verdict).
pub fn op_costs(log: &RecordedExecution) -> (Vec<OpCost>, Vec<OpCost>) {
    let mut star = Vec::new();
    let mut iterations = Vec::new();
    for slot in 0..log.processes() {
        let p = ProcessId::from_slot(slot);
        let mut open: Option<(Uid, usize, bool)> = None;
        for r in log.of(p) {
            match &r.action {
                Action::Invoke { layer: Layer::Star, op } => open = Some((op.uid, 0, false)),
                Action::Read(_) | Action::Write(_) | Action::Snapshot(_) => {
                    if let Some((_, n, _)) = open.as_mut() {
                        *n += 1;
                    }
                }
                Action::Respond { layer: Layer::Star, op, .. } => {
                    if let Some((uid, n, done)) = open.as_mut() {
                        if *uid == op.uid && !*done {
                            star.push(OpCost { process: p, op: *uid, bookkeeping: *n });
                            *done = true;
                        }
                    }
                }
                Action::Verdict { op: Some(v), .. } => {
                    if let Some((uid, n, _)) = open.take() {
                        if uid == *v {
                            iterations.push(OpCost { process: p, op: uid, bookkeeping: n });
                        }
                    }
                }
                _ => {}
            }
        }
    }
    (star, iterations)
}

/// Number of steps of each primitive kind outside the inner implementation.
pub fn primitive_counts(log: &RecordedExecution) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for r in bookkeeping_steps(log) {
        if let Some(kind) = r.action.primitive() {
            *counts.entry(format!("{kind:?}")).or_insert(0) += 1;
        }
    }
    counts
}

fn bookkeeping_steps(log: &RecordedExecution) -> impl Iterator<Item = &Record> {
    log.records().iter().filter(|r| match &r.action {
        Action::Invoke { layer, .. } | Action::Respond { layer, .. } => *layer != Layer::Inner,
        other => other.primitive().is_some() && other.region() != Some(Region::Inner),
    })
}

/// Steps outside the inner implementation that are neither local events
/// nor single-register reads and writes.
pub fn non_register_steps(log: &RecordedExecution) -> Vec<Record> {
    bookkeeping_steps(log)
        .filter(|r| !matches!(r.action.primitive(), Some(Primitive::Local | Primitive::Read | Primitive::Write)))
        .cloned()
        .collect()
}
