//! Deterministic shared-memory simulator.
//!
//! Each process runs a [`Program`], a resumable state machine that performs
//! exactly one step per call: a read, a write, an atomic snapshot, a step of
//! the inner implementation, or an invocation/response event. A [`Schedule`]
//! decides who moves next, so a run is fully determined by its programs,
//! its inner implementation, its operation source and its schedule.

pub mod log;
pub mod memory;
pub mod native;
pub mod schedule;
pub mod snapshot;

use std::sync::Arc;

use crate::enforce::{InnerImpl, InnerStep};
use crate::history::{OpDescriptor, ProcessId};
use crate::value::Value;
use crate::workload::OpSource;

pub use log::{Action, Layer, Loc, Primitive, Record, RecordedExecution, Region, VerdictRecord};
pub use memory::{Cell, Memory, Node, NodeId, ScanResult, Word};
pub use schedule::{Order, Schedule, ScheduleParseError};
pub use native::run_native;
pub use snapshot::{snapshot_object_sim, Engine, ScanOp, SnapWriter, SnapshotClient, UpdateOp};

use schedule::{Cursor, Next};

/// Everything processes share: memory, the inner implementation, the source
/// of operation choices and the log.
pub struct World {
    pub mem: Memory,
    pub inner: Box<dyn InnerImpl>,
    pub ops: Box<dyn OpSource>,
    pub log: RecordedExecution,
    step: u64,
}

impl World {
    pub fn new(processes: usize, mem: Memory, inner: Box<dyn InnerImpl>, ops: Box<dyn OpSource>) -> Self {
        World {
            mem,
            inner,
            ops,
            log: RecordedExecution::new(processes),
            step: 0,
        }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn env(&mut self, process: ProcessId) -> Env<'_> {
        Env {
            world: self,
            process,
            took: false,
        }
    }
}

/// A process's handle on the world for the duration of one step.
pub struct Env<'a> {
    world: &'a mut World,
    process: ProcessId,
    took: bool,
}

impl Env<'_> {
    pub fn process(&self) -> ProcessId {
        self.process
    }

    /// Index of the step being taken.
    pub fn step(&self) -> u64 {
        self.world.step
    }

    pub fn took_step(&self) -> bool {
        self.took
    }

    pub fn mem(&self) -> &Memory {
        &self.world.mem
    }

    fn take(&mut self, action: Action) {
        assert!(!self.took, "{} tried to take two steps at once", self.process);
        self.took = true;
        self.note(action);
    }

    /// Adds an annotation to the log without taking a step.
    pub fn note(&mut self, action: Action) {
        let record = Record {
            step: self.world.step,
            process: self.process,
            action,
        };
        self.world.log.push(record);
    }

    pub fn invoke(&mut self, layer: Layer, op: &OpDescriptor) {
        self.take(Action::Invoke { layer, op: op.clone() });
    }

    pub fn respond(&mut self, layer: Layer, op: &OpDescriptor, value: Value) {
        self.take(Action::Respond {
            layer,
            op: op.clone(),
            value,
        });
    }

    pub fn read(&mut self, region: Region, cell: usize) -> Cell {
        self.take(Action::Read(Loc { region, cell }));
        self.world.mem.cell(region, cell).clone()
    }

    pub fn write(&mut self, region: Region, cell: usize, word: Word, embedded: Option<Arc<ScanResult>>) {
        self.take(Action::Write(Loc { region, cell }));
        let step = self.world.step;
        self.world.mem.store(region, cell, word, embedded, step);
    }

    /// Reads a whole array in one step.
    pub fn snapshot(&mut self, region: Region) -> Vec<Word> {
        self.take(Action::Snapshot(region));
        self.world.mem.cells(region).iter().map(|c| c.word.clone()).collect()
    }

    /// Stores a node that becomes reachable once a head pointing at it is
    /// written; not a step of its own.
    pub fn alloc_node(&mut self, node: Node) -> NodeId {
        self.world.mem.alloc(node)
    }

    pub fn inner_invoke(&mut self, op: &OpDescriptor) {
        self.take(Action::Invoke {
            layer: Layer::Inner,
            op: op.clone(),
        });
        let p = self.process;
        self.world.inner.invoke(p, op);
    }

    /// One step of the pending inner operation; `Some` when it responded.
    pub fn inner_step(&mut self, op: &OpDescriptor) -> Option<Value> {
        let p = self.process;
        match self.world.inner.step(p, op) {
            InnerStep::Internal => {
                self.take(Action::InnerAccess(p));
                None
            }
            InnerStep::Respond(v) => {
                self.respond(Layer::Inner, op, v.clone());
                Some(v)
            }
        }
    }

    /// The operation this process chooses next, if any.
    pub fn next_op(&mut self) -> Option<(String, Value)> {
        let p = self.process;
        self.world.ops.next_op(p)
    }
}

pub enum Status {
    /// Took exactly one step.
    Running,
    /// Took no step and never will again.
    Finished,
}

pub trait Program: Send {
    fn step(&mut self, env: &mut Env<'_>) -> Status;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    /// Every process finished or crashed.
    Quiescent,
    ScheduleExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub steps: u64,
    pub stop: StopReason,
}

/// A world together with one program per process.
pub struct Sim {
    world: World,
    programs: Vec<Box<dyn Program>>,
    finished: Vec<bool>,
}

impl Sim {
    pub fn new(world: World, programs: Vec<Box<dyn Program>>) -> Self {
        let finished = vec![false; programs.len()];
        Sim {
            world,
            programs,
            finished,
        }
    }

    pub fn processes(&self) -> usize {
        self.programs.len()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn log(&self) -> &RecordedExecution {
        &self.world.log
    }

    pub fn into_log(self) -> RecordedExecution {
        self.world.log
    }

    pub fn is_finished(&self, p: ProcessId) -> bool {
        self.finished[p.slot()]
    }

    /// Lets `p` take one step; `false` if it has finished.
    pub fn step_process(&mut self, p: ProcessId) -> bool {
        if self.finished[p.slot()] {
            return false;
        }
        let mut env = self.world.env(p);
        match self.programs[p.slot()].step(&mut env) {
            Status::Running => {
                assert!(env.took_step(), "{p} reported progress without a step");
                self.world.step += 1;
                true
            }
            Status::Finished => {
                assert!(!env.took_step(), "{p} finished after taking a step");
                self.finished[p.slot()] = true;
                false
            }
        }
    }

    /// Runs until `budget` steps have been taken in total, the schedule ends
    /// or nobody can move.
    pub fn run(&mut self, schedule: &Schedule, budget: u64) -> RunSummary {
        let mut cursor = Cursor::new(schedule);
        let stop = loop {
            if self.world.step >= budget {
                break StopReason::Budget;
            }
            let now = self.world.step;
            let runnable: Vec<ProcessId> = (0..self.programs.len())
                .map(ProcessId::from_slot)
                .filter(|p| !self.finished[p.slot()] && !schedule.is_crashed(*p, now))
                .collect();
            if runnable.is_empty() {
                break StopReason::Quiescent;
            }
            match cursor.next(schedule, &runnable) {
                Next::Stop => break StopReason::ScheduleExhausted,
                Next::Pick(p) if runnable.contains(&p) => {
                    self.step_process(p);
                }
                Next::Pick(_) => {}
            }
        };
        RunSummary {
            steps: self.world.step,
            stop,
        }
    }
}
