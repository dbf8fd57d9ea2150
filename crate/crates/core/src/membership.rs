//! Linearizability checking.
//!
//! [`is_linearizable`] searches for a linearization by backtracking over the
//! operations that may come next, memoizing `(object state, linearized set)`
//! pairs that are known to fail. [`brute_force_linearizable`] is a slow,
//! independent oracle that enumerates extensions and permutations directly.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::sync::Arc;

use bitvec::prelude::*;
use itertools::Itertools;
use thiserror::Error;

use crate::history::{History, OpDescriptor, OpSpan, Uid};
use crate::spec::{accepts, SeqSpec};
use crate::value::Value;

/// A witness that a history is linearizable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linearization {
    /// The sequential history, in linearization order.
    pub order: Vec<(OpDescriptor, Value)>,
    /// Pending operations that were completed, with the response chosen for them.
    pub completed_pending: BTreeMap<Uid, Value>,
}

impl fmt::Display for Linearization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (op, v)) in self.order.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "<{}:{}>", op.call(), v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("history is not linearizable")]
pub struct NotMember;

struct Search<'a> {
    spec: &'a dyn SeqSpec,
    ops: &'a [OpSpan],
    failed: HashSet<(Value, BitVec)>,
    path: Vec<(usize, Value)>,
}

impl Search<'_> {
    /// Earliest response among complete operations not yet linearized.
    fn frontier(&self, done: &BitVec) -> usize {
        self.ops
            .iter()
            .enumerate()
            .filter(|(i, _)| !done[*i])
            .filter_map(|(_, s)| s.res.as_ref().map(|(r, _)| *r))
            .min()
            .unwrap_or(usize::MAX)
    }

    fn run(&mut self, state: Value, done: &mut BitVec) -> bool {
        let frontier = self.frontier(done);
        if frontier == usize::MAX {
            return true;
        }
        if self.failed.contains(&(state.clone(), done.clone())) {
            return false;
        }
        for i in 0..self.ops.len() {
            let span = &self.ops[i];
            // Operations are sorted by invocation, so nothing later is minimal.
            if span.inv > frontier {
                break;
            }
            if done[i] {
                continue;
            }
            for (next, value) in self.spec.transitions(&state, &span.op.label, &span.op.arg) {
                if span.value().is_some_and(|v| *v != value) {
                    continue;
                }
                done.set(i, true);
                self.path.push((i, value));
                if self.run(next, done) {
                    return true;
                }
                self.path.pop();
                done.set(i, false);
            }
        }
        self.failed.insert((state, done.clone()));
        false
    }
}

/// Searches for a linearization of `h` with respect to `spec`.
///
/// Pending operations may be completed with any response the object admits,
/// or dropped.
pub fn is_linearizable(h: &History, spec: &dyn SeqSpec) -> Result<Linearization, NotMember> {
    let ops = h.operations();
    let mut search = Search {
        spec,
        ops,
        failed: HashSet::new(),
        path: Vec::new(),
    };
    let mut done = bitvec![0; ops.len()];
    if !search.run(spec.initial(), &mut done) {
        return Err(NotMember);
    }
    let mut completed_pending = BTreeMap::new();
    let order = search
        .path
        .into_iter()
        .map(|(i, v)| {
            if !ops[i].is_complete() {
                completed_pending.insert(ops[i].op.uid, v.clone());
            }
            (ops[i].op.clone(), v)
        })
        .collect();
    Ok(Linearization {
        order,
        completed_pending,
    })
}

/// Independently re-checks a claimed linearization of `h`.
///
/// The order must contain every complete operation with its recorded value,
/// may contain pending operations, must respect `<` of the completed
/// extension and must be accepted by the object.
pub fn check_linearization(h: &History, spec: &dyn SeqSpec, lin: &Linearization) -> bool {
    let mut position = BTreeMap::new();
    for (k, (op, v)) in lin.order.iter().enumerate() {
        let Some(span) = h.operation(op.uid) else { return false };
        if span.op != *op || position.insert(op.uid, k).is_some() {
            return false;
        }
        if span.value().is_some_and(|recorded| recorded != v) {
            return false;
        }
    }
    for span in h.operations() {
        if span.is_complete() && !position.contains_key(&span.op.uid) {
            return false;
        }
    }
    for a in h.operations() {
        let Some((ra, _)) = &a.res else { continue };
        for b in h.operations() {
            if *ra < b.inv {
                if let (Some(pa), Some(pb)) = (position.get(&a.op.uid), position.get(&b.op.uid)) {
                    if pa > pb {
                        return false;
                    }
                }
            }
        }
    }
    accepts(spec, &lin.order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("brute-force oracle handles at most {limit} operations, got {ops}")]
pub struct TooLarge {
    pub limit: usize,
    pub ops: usize,
}

/// Largest history the brute-force oracle accepts, in operations.
pub const BRUTE_FORCE_LIMIT: usize = 8;

/// Exhaustive oracle: tries every subset of pending operations and every
/// permutation of the chosen operations that respects real-time order.
pub fn brute_force_linearizable(h: &History, spec: &dyn SeqSpec) -> Result<bool, TooLarge> {
    let ops = h.operations();
    if ops.len() > BRUTE_FORCE_LIMIT {
        return Err(TooLarge {
            limit: BRUTE_FORCE_LIMIT,
            ops: ops.len(),
        });
    }
    let complete: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is_complete()).collect();
    let pending: Vec<usize> = (0..ops.len()).filter(|&i| !ops[i].is_complete()).collect();
    let before = |a: usize, b: usize| ops[a].res.as_ref().is_some_and(|(r, _)| *r < ops[b].inv);
    for subset in pending.iter().copied().powerset() {
        let chosen: Vec<usize> = complete.iter().copied().chain(subset).collect();
        for perm in chosen.iter().copied().permutations(chosen.len()) {
            let respects = perm
                .iter()
                .enumerate()
                .all(|(x, &a)| perm[x + 1..].iter().all(|&b| !before(b, a)));
            if respects && runs(spec, ops, &perm) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Follows all object states along `perm`; pending operations take any response.
fn runs(spec: &dyn SeqSpec, ops: &[OpSpan], perm: &[usize]) -> bool {
    let mut states = vec![spec.initial()];
    for &i in perm {
        let span = &ops[i];
        let mut next: Vec<Value> = states
            .iter()
            .flat_map(|s| spec.transitions(s, &span.op.label, &span.op.arg))
            .filter(|(_, v)| span.value().is_none_or(|r| r == v))
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

/// A set of histories closed under prefixes and similarity.
pub trait GenLinObject: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn member(&self, h: &History) -> bool;
}

/// The linearizable histories of a sequential object.
#[derive(Debug, Clone)]
pub struct LinObject {
    spec: Arc<dyn SeqSpec>,
}

impl LinObject {
    pub fn spec(&self) -> &Arc<dyn SeqSpec> {
        &self.spec
    }
}

impl GenLinObject for LinObject {
    fn name(&self) -> &str {
        self.spec.name()
    }

    fn member(&self, h: &History) -> bool {
        is_linearizable(h, self.spec.as_ref()).is_ok()
    }
}

pub fn lin_object(spec: Arc<dyn SeqSpec>) -> LinObject {
    LinObject { spec }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::HistoryBuilder;
    use crate::spec::{Queue, Stack};

    #[test]
    fn overlapping_enq_deq() {
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Enq", 1);
        b.invoke(2, "Deq", ());
        b.respond(2, 1);
        b.respond(1, true);
        let h = b.build();
        let lin = is_linearizable(&h, &Queue).unwrap();
        assert_eq!(lin.order[0].0.label.as_ref(), "Enq");
        assert!(check_linearization(&h, &Queue, &lin));
        assert_eq!(brute_force_linearizable(&h, &Queue), Ok(true));
    }

    #[test]
    fn deq_before_enq_is_rejected() {
        let mut b = HistoryBuilder::new();
        b.invoke(2, "Deq", ());
        b.respond(2, 1);
        b.invoke(1, "Enq", 1);
        b.respond(1, true);
        let h = b.build();
        assert_eq!(is_linearizable(&h, &Queue), Err(NotMember));
        assert_eq!(brute_force_linearizable(&h, &Queue), Ok(false));
    }

    #[test]
    fn pending_ops_completed_or_dropped() {
        // A pending Enq(1) explains a completed Deq():1.
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Enq", 1);
        b.invoke(2, "Deq", ());
        b.respond(2, 1);
        let h = b.build();
        let lin = is_linearizable(&h, &Queue).unwrap();
        assert_eq!(lin.completed_pending.len(), 1);
        assert!(check_linearization(&h, &Queue, &lin));

        // A pending Push that cannot help is dropped.
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Push", 7);
        b.invoke(2, "Pop", ());
        b.respond(2, Value::Empty);
        let h = b.build();
        let lin = is_linearizable(&h, &Stack).unwrap();
        assert!(check_linearization(&h, &Stack, &lin));
    }

    #[test]
    fn brute_force_limit() {
        let mut b = HistoryBuilder::new();
        for p in 1..=9 {
            b.invoke(p, "Enq", 1);
        }
        let h = b.build();
        assert_eq!(
            brute_force_linearizable(&h, &Queue),
            Err(TooLarge {
                limit: BRUTE_FORCE_LIMIT,
                ops: 9
            })
        );
    }

    #[test]
    fn check_rejects_bad_witnesses() {
        let mut b = HistoryBuilder::new();
        b.invoke(1, "Enq", 1);
        b.respond(1, true);
        b.invoke(2, "Deq", ());
        b.respond(2, 1);
        let h = b.build();
        let mut lin = is_linearizable(&h, &Queue).unwrap();
        lin.order.reverse();
        assert!(!check_linearization(&h, &Queue, &lin));
        lin.order.pop();
        assert!(!check_linearization(&h, &Queue, &lin));
    }
}
