//! Snapshot objects over single-writer arrays.
//!
//! The atomic engine reads a whole array in one step. The algorithmic engine
//! uses only reads and writes: a scan repeats collects until two consecutive
//! ones agree, and borrows the snapshot embedded in a cell whose writer was
//! seen moving twice. A writer embeds the last snapshot it completed since
//! its previous write, taking a fresh one first if there is none.

use std::sync::Arc;

use crate::sim::log::Region;
use crate::sim::memory::{Cell, ScanResult, Word};
use crate::sim::Env;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Engine {
    Atomic,
    #[default]
    Algorithmic,
}

/// Per-writer bookkeeping for one array.
#[derive(Debug, Clone, Default)]
pub struct SnapWriter {
    has_written: bool,
    since_write: Option<Arc<ScanResult>>,
}

impl SnapWriter {
    /// Remembers a snapshot this writer completed.
    pub fn observe(&mut self, scan: &Arc<ScanResult>) {
        self.since_write = Some(scan.clone());
    }
}

/// A scan in progress.
#[derive(Debug, Clone)]
pub struct ScanOp {
    region: Region,
    engine: Engine,
    previous: Option<Vec<Cell>>,
    previous_end: u64,
    current: Vec<Cell>,
    moved: Vec<u8>,
}

impl ScanOp {
    pub fn new(region: Region, engine: Engine) -> Self {
        ScanOp {
            region,
            engine,
            previous: None,
            previous_end: 0,
            current: Vec::new(),
            moved: Vec::new(),
        }
    }

    /// Takes one step; `Some` once the scan is complete.
    pub fn poll(&mut self, env: &mut Env<'_>) -> Option<Arc<ScanResult>> {
        if self.engine == Engine::Atomic {
            let words = env.snapshot(self.region);
            return Some(Arc::new(ScanResult { words, lp: env.step() }));
        }
        let n = env.mem().len(self.region);
        let index = self.current.len();
        let cell = env.read(self.region, index);
        self.current.push(cell);
        if self.current.len() < n {
            return None;
        }
        let current = std::mem::take(&mut self.current);
        if let Some(previous) = &self.previous {
            if previous.iter().zip(&current).all(|(a, b)| a.seq == b.seq) {
                // Nothing changed between the two collects, so memory held
                // these values right after the last read of the first one.
                let words = current.into_iter().map(|c| c.word).collect();
                return Some(Arc::new(ScanResult {
                    words,
                    lp: self.previous_end,
                }));
            }
            self.moved.resize(n, 0);
            for j in 0..n {
                if previous[j].seq != current[j].seq {
                    self.moved[j] += 1;
                    if self.moved[j] >= 2 {
                        let borrowed = current[j].embedded.clone();
                        return Some(borrowed.expect("a writer seen moving twice embeds a snapshot"));
                    }
                }
            }
        }
        self.previous = Some(current);
        self.previous_end = env.step();
        None
    }
}

/// A write to one's own cell, preceded by a scan when helping requires it.
#[derive(Debug, Clone)]
pub struct UpdateOp {
    region: Region,
    cell: usize,
    word: Word,
    engine: Engine,
    scan: Option<ScanOp>,
}

impl UpdateOp {
    pub fn new(region: Region, cell: usize, word: Word, engine: Engine) -> Self {
        UpdateOp {
            region,
            cell,
            word,
            engine,
            scan: None,
        }
    }

    /// Takes one step; `true` once the write happened.
    pub fn poll(&mut self, env: &mut Env<'_>, writer: &mut SnapWriter) -> bool {
        if self.engine == Engine::Algorithmic && writer.has_written && writer.since_write.is_none() {
            let region = self.region;
            let scan = self.scan.get_or_insert_with(|| ScanOp::new(region, Engine::Algorithmic));
            if let Some(result) = scan.poll(env) {
                writer.since_write = Some(result);
                self.scan = None;
            }
            return false;
        }
        let embedded = match self.engine {
            Engine::Atomic => None,
            Engine::Algorithmic => writer.since_write.take(),
        };
        env.write(self.region, self.cell, std::mem::take(&mut self.word), embedded);
        writer.has_written = true;
        writer.since_write = None;
        true
    }
}

/// A client of a stand-alone snapshot object on [`Region::Object`]: takes
/// `Update([p, v])` and `Scan()` operations from the operation source and
/// logs them on [`Layer::Object`](crate::sim::Layer::Object).
pub struct SnapshotClient {
    engine: Engine,
    writer: SnapWriter,
    counter: u32,
    state: ClientState,
}

enum ClientState {
    Idle,
    Scanning(crate::history::OpDescriptor, ScanOp),
    Updating(crate::history::OpDescriptor, UpdateOp),
    Responding(crate::history::OpDescriptor, crate::value::Value),
}

impl SnapshotClient {
    pub fn new(engine: Engine) -> Self {
        SnapshotClient {
            engine,
            writer: SnapWriter::default(),
            counter: 0,
            state: ClientState::Idle,
        }
    }
}

impl crate::sim::Program for SnapshotClient {
    fn step(&mut self, env: &mut Env<'_>) -> crate::sim::Status {
        use crate::history::{OpDescriptor, Uid};
        use crate::sim::{Layer, Status};
        use crate::value::Value;

        let p = env.process();
        self.state = match std::mem::replace(&mut self.state, ClientState::Idle) {
            ClientState::Idle => {
                let Some((label, arg)) = env.next_op() else {
                    return Status::Finished;
                };
                let op = OpDescriptor::new(p, Uid::new(p, self.counter), &label, arg.clone());
                self.counter += 1;
                env.invoke(Layer::Object, &op);
                if label == "Scan" {
                    ClientState::Scanning(op, ScanOp::new(Region::Object, self.engine))
                } else {
                    let value = match arg.as_list() {
                        Some([_, v]) => v.clone(),
                        _ => Value::Error,
                    };
                    let update = UpdateOp::new(Region::Object, p.slot(), Word::Value(value), self.engine);
                    ClientState::Updating(op, update)
                }
            }
            ClientState::Scanning(op, mut scan) => match scan.poll(env) {
                Some(result) => {
                    self.writer.observe(&result);
                    let items = result
                        .words
                        .iter()
                        .map(|w| match w {
                            Word::Value(v) => v.clone(),
                            _ => Value::Error,
                        })
                        .collect();
                    ClientState::Responding(op, Value::List(items))
                }
                None => ClientState::Scanning(op, scan),
            },
            ClientState::Updating(op, mut update) => {
                if update.poll(env, &mut self.writer) {
                    ClientState::Responding(op, Value::Bool(true))
                } else {
                    ClientState::Updating(op, update)
                }
            }
            ClientState::Responding(op, value) => {
                env.respond(Layer::Object, &op, value);
                ClientState::Idle
            }
        };
        Status::Running
    }
}

/// A simulation of `processes` snapshot clients sharing one object whose
/// components start at 0.
pub fn snapshot_object_sim(processes: usize, engine: Engine, ops: Box<dyn crate::workload::OpSource>) -> crate::sim::Sim {
    use crate::sim::{Memory, Program, Sim, World};

    let spec = crate::spec::by_name(&format!("snapshot:{processes}")).expect("snapshot objects are in the catalog");
    let mut mem = Memory::new();
    mem.add_array(Region::Object, processes, Word::Value(crate::value::Value::Int(0)));
    let inner = Box::new(crate::enforce::AtomicInner::new(spec));
    let world = World::new(processes, mem, inner, ops);
    let programs = (0..processes)
        .map(|_| Box::new(SnapshotClient::new(engine)) as Box<dyn Program>)
        .collect();
    Sim::new(world, programs)
}
