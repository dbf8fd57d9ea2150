//! Inner implementations and the view-returning wrapper around them.
//!
//! A wrapped operation announces itself in its process's cell of the announce
//! array, calls the inner implementation, snapshots the announce array and
//! returns the inner response together with the union of what it saw.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::history::{History, OpDescriptor, ProcessId, Uid};
use crate::membership::GenLinObject;
use crate::sim::memory::union_tuples;
use crate::sim::{Engine, Env, Layer, Memory, Node, NodeId, Program, Region, ScanOp, Sim, SnapWriter, Status, UpdateOp, Word, World};
use crate::spec::SeqSpec;
use crate::value::Value;
use crate::verifier::{Verdict, VerifierIteration, VerifierState};
use crate::views::{build_history, View, ViewError};
use crate::workload::OpSource;

/// What one step of an inner operation did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InnerStep {
    /// Accessed the implementation's base objects; not done yet.
    Internal,
    Respond(Value),
}

/// A black-box implementation of a concurrent object.
///
/// The simulator calls [`InnerImpl::invoke`] at the invocation step and then
/// [`InnerImpl::step`] once per scheduled step until it responds.
pub trait InnerImpl: Send {
    fn name(&self) -> String;

    fn invoke(&mut self, p: ProcessId, op: &OpDescriptor);

    fn step(&mut self, p: ProcessId, op: &OpDescriptor) -> InnerStep;
}

/// A correct implementation: one atomic step applies the operation to a
/// shared copy of the sequential object, the next step responds.
#[derive(Debug)]
pub struct AtomicInner {
    spec: Arc<dyn SeqSpec>,
    state: Value,
    ready: BTreeMap<ProcessId, Value>,
}

impl AtomicInner {
    pub fn new(spec: Arc<dyn SeqSpec>) -> Self {
        let state = spec.initial();
        AtomicInner {
            spec,
            state,
            ready: BTreeMap::new(),
        }
    }
}

impl InnerImpl for AtomicInner {
    fn name(&self) -> String {
        format!("correct {}", self.spec.name())
    }

    fn invoke(&mut self, p: ProcessId, _op: &OpDescriptor) {
        self.ready.remove(&p);
    }

    fn step(&mut self, p: ProcessId, op: &OpDescriptor) -> InnerStep {
        if let Some(v) = self.ready.remove(&p) {
            return InnerStep::Respond(v);
        }
        let v = match self.spec.apply(&self.state, &op.label, &op.arg) {
            Some((next, v)) => {
                self.state = next;
                v
            }
            None => Value::Empty,
        };
        self.ready.insert(p, v);
        InnerStep::Internal
    }
}

fn is_insertion(label: &str) -> bool {
    matches!(label, "Enq" | "Push" | "Ins" | "Add" | "Write")
}

/// The faulty queue used in the impossibility argument: every insertion
/// returns `true` and every removal `empty`, except that the first operation
/// of process 1 returns `1`.
#[derive(Debug, Default)]
pub struct FirstDequeueQueue {
    first_done: bool,
}

pub fn buggy_queue_thm1() -> Box<dyn InnerImpl> {
    Box::new(FirstDequeueQueue::default())
}

impl InnerImpl for FirstDequeueQueue {
    fn name(&self) -> String {
        "buggy-thm1".into()
    }

    fn invoke(&mut self, _p: ProcessId, _op: &OpDescriptor) {}

    fn step(&mut self, p: ProcessId, op: &OpDescriptor) -> InnerStep {
        let first = p.index() == 1 && !self.first_done;
        if p.index() == 1 {
            self.first_done = true;
        }
        if is_insertion(&op.label) {
            InnerStep::Respond(Value::Bool(true))
        } else if first {
            InnerStep::Respond(Value::Int(1))
        } else {
            InnerStep::Respond(Value::Empty)
        }
    }
}

/// Responds with per-process scripted values, then `empty`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInner {
    scripts: BTreeMap<ProcessId, VecDeque<Value>>,
}

impl ScriptedInner {
    pub fn new() -> Self {
        ScriptedInner::default()
    }

    pub fn script(mut self, p: u32, values: impl IntoIterator<Item = Value>) -> Self {
        self.scripts.entry(ProcessId::new(p)).or_default().extend(values);
        self
    }

    /// Parses lines of the form `<process> <value> <value> ...`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let mut inner = ScriptedInner::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let head = tokens.next().unwrap_or_default();
            let p = head
                .strip_prefix('p')
                .unwrap_or(head)
                .parse::<u32>()
                .ok()
                .filter(|&p| p >= 1)
                .ok_or((i + 1, format!("`{head}` is not a process index")))?;
            let values = tokens
                .map(|t| t.parse::<Value>().map_err(|e| (i + 1, e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            inner = inner.script(p, values);
        }
        Ok(inner)
    }
}

impl InnerImpl for ScriptedInner {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn invoke(&mut self, _p: ProcessId, _op: &OpDescriptor) {}

    fn step(&mut self, p: ProcessId, _op: &OpDescriptor) -> InnerStep {
        let v = self.scripts.get_mut(&p).and_then(VecDeque::pop_front).unwrap_or(Value::Empty);
        InnerStep::Respond(v)
    }
}

/// A correct implementation whose responses are occasionally replaced by a
/// random wrong value.
#[derive(Debug)]
pub struct FlakyInner {
    atomic: AtomicInner,
    rng: ChaCha8Rng,
    rate: f64,
}

impl FlakyInner {
    pub fn new(spec: Arc<dyn SeqSpec>, seed: u64, rate: f64) -> Self {
        FlakyInner {
            atomic: AtomicInner::new(spec),
            rng: ChaCha8Rng::seed_from_u64(seed),
            rate,
        }
    }
}

impl InnerImpl for FlakyInner {
    fn name(&self) -> String {
        format!("flaky {}", self.atomic.spec.name())
    }

    fn invoke(&mut self, p: ProcessId, op: &OpDescriptor) {
        self.atomic.invoke(p, op);
    }

    fn step(&mut self, p: ProcessId, op: &OpDescriptor) -> InnerStep {
        match self.atomic.step(p, op) {
            InnerStep::Respond(v) if self.rng.gen_bool(self.rate) => {
                let choices = [Value::Empty, Value::Int(1), Value::Int(2), Value::Int(3), Value::Bool(false)];
                let wrong: Vec<&Value> = choices.iter().filter(|c| **c != v).collect();
                InnerStep::Respond(wrong[self.rng.gen_range(0..wrong.len())].clone())
            }
            other => other,
        }
    }
}

/// Builds an inner implementation by name: `correct`, `buggy-thm1` or
/// `flaky` (`flaky:<rate>`, default rate 0.2).
pub fn inner_by_name(name: &str, spec: &Arc<dyn SeqSpec>, seed: u64) -> Option<Box<dyn InnerImpl>> {
    match name {
        "correct" => Some(Box::new(AtomicInner::new(spec.clone()))),
        "buggy-thm1" => Some(buggy_queue_thm1()),
        "flaky" => Some(Box::new(FlakyInner::new(spec.clone(), seed, 0.2))),
        other => {
            let rate: f64 = other.strip_prefix("flaky:")?.parse().ok().filter(|r| (0.0..=1.0).contains(r))?;
            Some(Box::new(FlakyInner::new(spec.clone(), seed, rate)))
        }
    }
}

/// How the wrapper stores and reads its announce sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WrapperConfig {
    pub engine: Engine,
    /// Announce lists of immutable nodes instead of whole sets.
    pub bounded: bool,
}

/// Per-process state of the wrapper.
#[derive(Debug, Clone)]
pub struct StarState {
    config: WrapperConfig,
    announced: Arc<View>,
    head: Option<NodeId>,
    writer: SnapWriter,
    next_seq: u32,
}

impl StarState {
    pub fn new(config: WrapperConfig) -> Self {
        StarState {
            config,
            announced: Arc::new(View::new()),
            head: None,
            writer: SnapWriter::default(),
            next_seq: 0,
        }
    }

    /// Descriptor of this process's next operation.
    pub fn next_op(&mut self, p: ProcessId, label: &str, arg: Value) -> OpDescriptor {
        let op = OpDescriptor::new(p, Uid::new(p, self.next_seq), label, arg);
        self.next_seq += 1;
        op
    }

    fn announce_word(&mut self, env: &mut Env<'_>, op: &OpDescriptor) -> Word {
        if self.config.bounded {
            let node = env.alloc_node(Node {
                op: op.clone(),
                next: self.head,
            });
            self.head = Some(node);
            Word::Head(Some(node))
        } else {
            Arc::make_mut(&mut self.announced).insert(op.clone());
            Word::Ops(self.announced.clone())
        }
    }
}

#[derive(Debug, Clone)]
enum StarStage {
    Invoke,
    Announce(Option<UpdateOp>),
    InnerInvoke,
    Inner,
    Snapshot(Value, ScanOp),
    Respond(Value, Arc<View>),
    Done,
}

/// One wrapped operation in progress.
#[derive(Debug, Clone)]
pub struct StarOp {
    op: OpDescriptor,
    stage: StarStage,
}

impl StarOp {
    pub fn new(op: OpDescriptor) -> Self {
        StarOp {
            op,
            stage: StarStage::Invoke,
        }
    }

    pub fn op(&self) -> &OpDescriptor {
        &self.op
    }

    /// Takes one step; returns the response and view at the response step.
    pub fn poll(&mut self, env: &mut Env<'_>, st: &mut StarState) -> Option<(Value, Arc<View>)> {
        match &mut self.stage {
            StarStage::Invoke => {
                env.invoke(Layer::Star, &self.op);
                self.stage = StarStage::Announce(None);
            }
            StarStage::Announce(update) => {
                if update.is_none() {
                    let word = st.announce_word(env, &self.op);
                    let cell = self.op.process.slot();
                    *update = Some(UpdateOp::new(Region::Announce, cell, word, st.config.engine));
                }
                if update.as_mut().expect("set above").poll(env, &mut st.writer) {
                    env.note(crate::sim::Action::Announced { op: self.op.clone() });
                    self.stage = StarStage::InnerInvoke;
                }
            }
            StarStage::InnerInvoke => {
                env.inner_invoke(&self.op);
                self.stage = StarStage::Inner;
            }
            StarStage::Inner => {
                if let Some(y) = env.inner_step(&self.op) {
                    self.stage = StarStage::Snapshot(y, ScanOp::new(Region::Announce, st.config.engine));
                }
            }
            StarStage::Snapshot(y, scan) => {
                if let Some(result) = scan.poll(env) {
                    st.writer.observe(&result);
                    let view = Arc::new(env.mem().union_ops(&result.words));
                    env.note(crate::sim::Action::ViewTaken {
                        op: self.op.uid,
                        lp: result.lp,
                        view: view.clone(),
                    });
                    let y = std::mem::replace(y, Value::Unit);
                    self.stage = StarStage::Respond(y, view);
                }
            }
            StarStage::Respond(y, view) => {
                let out = (y.clone(), view.clone());
                env.respond(Layer::Star, &self.op, out.0.clone());
                self.stage = StarStage::Done;
                return Some(out);
            }
            StarStage::Done => panic!("polled a finished operation"),
        }
        None
    }
}

/// A process that only runs wrapped operations.
pub struct StarClient {
    st: StarState,
    current: Option<StarOp>,
}

impl StarClient {
    pub fn new(config: WrapperConfig) -> Self {
        StarClient {
            st: StarState::new(config),
            current: None,
        }
    }
}

impl Program for StarClient {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        if self.current.is_none() {
            let Some((label, arg)) = env.next_op() else {
                return Status::Finished;
            };
            let op = self.st.next_op(env.process(), &label, arg);
            self.current = Some(StarOp::new(op));
        }
        let op = self.current.as_mut().expect("set above");
        if op.poll(env, &mut self.st).is_some() {
            self.current = None;
        }
        Status::Running
    }
}

/// Memory for `clients` wrapper processes: announce and result arrays.
pub fn wrapper_memory(clients: usize) -> Memory {
    Memory::new()
        .with_array(Region::Announce, clients)
        .with_array(Region::Results, clients)
}

/// `n` processes running wrapped operations only.
pub fn star_sim(n: usize, config: WrapperConfig, inner: Box<dyn InnerImpl>, ops: Box<dyn OpSource>) -> Sim {
    let world = World::new(n, wrapper_memory(n), inner, ops);
    let programs = (0..n)
        .map(|_| Box::new(StarClient::new(config)) as Box<dyn Program>)
        .collect();
    Sim::new(world, programs)
}

#[derive(Debug, Clone)]
enum EnforcedStage {
    Invoke,
    Iterate(VerifierIteration),
    Respond(Value),
}

/// A process of the self-enforced object: every operation returns the inner
/// response, or `error` when the verifier rejects the reconstructed history.
pub struct SelfEnforcedClient {
    st: VerifierState,
    current: Option<(OpDescriptor, EnforcedStage)>,
    halt_on_error: bool,
    halted: bool,
}

impl SelfEnforcedClient {
    pub fn new(st: VerifierState, halt_on_error: bool) -> Self {
        SelfEnforcedClient {
            st,
            current: None,
            halt_on_error,
            halted: false,
        }
    }
}

impl Program for SelfEnforcedClient {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        if self.halted {
            return Status::Finished;
        }
        if self.current.is_none() {
            let Some((label, arg)) = env.next_op() else {
                return Status::Finished;
            };
            let op = self.st.star.next_op(env.process(), &label, arg);
            self.current = Some((op, EnforcedStage::Invoke));
        }
        let (op, stage) = self.current.as_mut().expect("set above");
        match stage {
            EnforcedStage::Invoke => {
                env.invoke(Layer::Enforced, op);
                *stage = EnforcedStage::Iterate(VerifierIteration::new(op.clone()));
            }
            EnforcedStage::Iterate(iteration) => {
                if let Some((y, verdict)) = iteration.poll(env, &mut self.st) {
                    let out = match verdict {
                        Verdict::Ok => y,
                        Verdict::Error { .. } => Value::Error,
                    };
                    *stage = EnforcedStage::Respond(out);
                }
            }
            EnforcedStage::Respond(out) => {
                env.respond(Layer::Enforced, op, out.clone());
                self.halted = self.halt_on_error && *out == Value::Error;
                self.current = None;
            }
        }
        Status::Running
    }
}

/// The history rebuilt from everything currently in the result array, as a
/// process reading it atomically right now would see it.
pub fn certificate(world: &World) -> Result<History, ViewError> {
    let words: Vec<Word> = world.mem.cells(Region::Results).iter().map(|c| c.word.clone()).collect();
    build_history(&union_tuples(&words))
}

/// `n` self-enforced processes checking against `object`.
pub fn enforced_sim(
    n: usize,
    config: WrapperConfig,
    results_engine: Engine,
    object: Arc<dyn GenLinObject>,
    inner: Box<dyn InnerImpl>,
    ops: Box<dyn OpSource>,
    halt_on_error: bool,
) -> Sim {
    let world = World::new(n, wrapper_memory(n), inner, ops);
    let cache = VerifierState::shared_cache();
    let programs = (0..n)
        .map(|_| {
            let st = VerifierState::new(config, results_engine, object.clone(), cache.clone());
            Box::new(SelfEnforcedClient::new(st, halt_on_error)) as Box<dyn Program>
        })
        .collect();
    Sim::new(world, programs)
}
