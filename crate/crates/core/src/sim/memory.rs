//! Simulated shared memory: single-writer cells grouped into arrays, plus an
//! append-only node arena for the bounded announce lists.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::history::OpDescriptor;
use crate::sim::log::Region;
use crate::value::Value;
use crate::views::{TupleSet, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Immutable list node; becomes reachable when a head pointing at it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub op: OpDescriptor,
    pub next: Option<NodeId>,
}

/// Contents of a register.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Word {
    #[default]
    Nil,
    Value(Value),
    /// A cumulative announce set.
    Ops(Arc<View>),
    /// Head of an announce list in the bounded representation.
    Head(Option<NodeId>),
    /// A cumulative set of response tuples.
    Tuples(Arc<TupleSet>),
    /// A process's own log of invocations and responses.
    Record(Arc<Vec<(OpDescriptor, Option<Value>)>>),
}

/// Result of a snapshot: one word per cell and the step at which it held.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub words: Vec<Word>,
    pub lp: u64,
}

/// A single-writer register of a snapshot array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cell {
    /// Number of writes so far.
    pub seq: u64,
    pub word: Word,
    /// A snapshot taken by the writer since its previous write, for helping.
    pub embedded: Option<Arc<ScanResult>>,
}

#[derive(Debug, Clone, Default)]
pub struct Memory {
    arrays: BTreeMap<Region, Vec<Cell>>,
    /// Step indices of the writes to each cell.
    writes: BTreeMap<Region, Vec<Vec<u64>>>,
    nodes: Vec<Node>,
}

impl Memory {
    pub fn new() -> Self {
        Memory::default()
    }

    /// Adds an array of `len` cells, all [`Word::Nil`], unless it already exists.
    pub fn with_array(mut self, region: Region, len: usize) -> Self {
        self.add_array(region, len, Word::Nil);
        self
    }

    pub fn add_array(&mut self, region: Region, len: usize, initial: Word) {
        let cell = Cell {
            seq: 0,
            word: initial,
            embedded: None,
        };
        self.arrays.entry(region).or_insert_with(|| vec![cell; len]);
        self.writes.entry(region).or_insert_with(|| vec![Vec::new(); len]);
    }

    pub fn len(&self, region: Region) -> usize {
        self.arrays.get(&region).map_or(0, Vec::len)
    }

    pub fn cell(&self, region: Region, index: usize) -> &Cell {
        &self.arrays[&region][index]
    }

    pub fn cells(&self, region: Region) -> &[Cell] {
        &self.arrays[&region]
    }

    pub(crate) fn store(&mut self, region: Region, index: usize, word: Word, embedded: Option<Arc<ScanResult>>, step: u64) {
        let cell = &mut self.arrays.get_mut(&region).expect("array exists")[index];
        cell.seq += 1;
        cell.word = word;
        cell.embedded = embedded;
        self.writes.get_mut(&region).expect("array exists")[index].push(step);
    }

    /// Steps at which a cell was written.
    pub fn write_history(&self, region: Region, index: usize) -> &[u64] {
        &self.writes[&region][index]
    }

    pub(crate) fn alloc(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    /// Operations reachable from a list head.
    pub fn list(&self, mut head: Option<NodeId>) -> Vec<OpDescriptor> {
        let mut out = Vec::new();
        while let Some(id) = head {
            let node = self.node(id);
            out.push(node.op.clone());
            head = node.next;
        }
        out
    }

    /// Union of the announce sets or lists held in `words`.
    pub fn union_ops(&self, words: &[Word]) -> View {
        let mut view = View::new();
        for w in words {
            match w {
                Word::Ops(set) => view.extend(set.iter().cloned()),
                Word::Head(head) => view.extend(self.list(*head)),
                _ => {}
            }
        }
        view
    }
}

/// Union of the tuple sets held in `words`.
pub fn union_tuples(words: &[Word]) -> TupleSet {
    let mut all = TupleSet::new();
    for w in words {
        if let Word::Tuples(set) = w {
            all.union_with(set).expect("tuples of one run never conflict");
        }
    }
    all
}
