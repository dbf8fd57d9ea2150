//! Verifiers that rebuild the history of the wrapped object from response
//! tuples and test it.
//!
//! In coupled mode every process runs the loop itself: a wrapped operation,
//! a write of its accumulated tuples to the result array, a snapshot of that
//! array, and a membership test of the rebuilt history. In monitor mode,
//! client processes only write their tuples and separate verifier processes
//! poll the result array.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::enforce::{wrapper_memory, InnerImpl, StarOp, StarState, WrapperConfig};
use crate::history::{History, OpDescriptor, Uid};
use crate::membership::GenLinObject;
use crate::sim::memory::union_tuples;
use crate::sim::{
    Action, Engine, Env, Memory, Program, RecordedExecution, Region, RunSummary, Schedule, ScanOp, Sim, SnapWriter,
    Status, UpdateOp, VerdictRecord, Word, World,
};
use crate::value::Value;
use crate::views::{build_history, ResponseTuple, TupleSet};
use crate::workload::OpSource;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Ok,
    /// The rebuilt history is not in the object; it and the tuples it came
    /// from are kept as a witness.
    Error { witness: History, tuples: TupleSet },
}

impl Verdict {
    pub fn is_error(&self) -> bool {
        matches!(self, Verdict::Error { .. })
    }
}

/// Verdicts already computed in a run, keyed by the uids of the tuple set.
///
/// Tuples of one run never change once written, so the uid list determines
/// the tuple set.
pub type VerdictCache = Arc<Mutex<HashMap<Vec<Uid>, Verdict>>>;

/// Tests the history rebuilt from `tuples`.
pub fn decide(object: &dyn GenLinObject, tuples: &TupleSet, cache: &VerdictCache) -> Verdict {
    let key: Vec<Uid> = tuples.iter().map(|t| t.op.uid).collect();
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return v.clone();
    }
    let witness = build_history(tuples).expect("tuples written by the wrapper have consistent views");
    let verdict = if object.member(&witness) {
        Verdict::Ok
    } else {
        Verdict::Error {
            witness,
            tuples: tuples.clone(),
        }
    };
    cache.lock().expect("cache lock").insert(key, verdict.clone());
    verdict
}

/// Per-process state of a coupled verifier or self-enforced client.
#[derive(Debug, Clone)]
pub struct VerifierState {
    pub(crate) star: StarState,
    results: Arc<TupleSet>,
    writer: SnapWriter,
    results_engine: Engine,
    object: Arc<dyn GenLinObject>,
    cache: VerdictCache,
}

impl VerifierState {
    pub fn new(config: WrapperConfig, results_engine: Engine, object: Arc<dyn GenLinObject>, cache: VerdictCache) -> Self {
        VerifierState {
            star: StarState::new(config),
            results: Arc::new(TupleSet::new()),
            writer: SnapWriter::default(),
            results_engine,
            object,
            cache,
        }
    }

    pub fn shared_cache() -> VerdictCache {
        Arc::new(Mutex::new(HashMap::new()))
    }
}

#[derive(Debug, Clone)]
enum IterStage {
    Star(StarOp),
    Write(UpdateOp, Value),
    Scan(ScanOp, Value),
}

/// One pass of the verification loop for one operation.
#[derive(Debug, Clone)]
pub struct VerifierIteration {
    stage: IterStage,
    uid: Uid,
}

impl VerifierIteration {
    pub fn new(op: OpDescriptor) -> Self {
        VerifierIteration {
            uid: op.uid,
            stage: IterStage::Star(StarOp::new(op)),
        }
    }

    /// Takes one step; at the last one returns the wrapped response and the verdict.
    pub fn poll(&mut self, env: &mut Env<'_>, st: &mut VerifierState) -> Option<(Value, Verdict)> {
        match &mut self.stage {
            IterStage::Star(op) => {
                if let Some((y, view)) = op.poll(env, &mut st.star) {
                    let tuple = ResponseTuple::new(op.op().clone(), y.clone(), view);
                    Arc::make_mut(&mut st.results).insert(tuple).expect("fresh uid");
                    let word = Word::Tuples(st.results.clone());
                    let cell = env.process().slot();
                    self.stage = IterStage::Write(UpdateOp::new(Region::Results, cell, word, st.results_engine), y);
                }
            }
            IterStage::Write(update, y) => {
                if update.poll(env, &mut st.writer) {
                    let y = std::mem::replace(y, Value::Unit);
                    self.stage = IterStage::Scan(ScanOp::new(Region::Results, st.results_engine), y);
                }
            }
            IterStage::Scan(scan, y) => {
                if let Some(result) = scan.poll(env) {
                    st.writer.observe(&result);
                    let verdict = decide(st.object.as_ref(), &union_tuples(&result.words), &st.cache);
                    env.note(Action::Verdict {
                        op: Some(self.uid),
                        verdict: verdict.clone(),
                    });
                    return Some((y.clone(), verdict));
                }
            }
        }
        None
    }
}

/// A process that runs the verification loop on its own operations.
pub struct CoupledVerifier {
    st: VerifierState,
    current: Option<VerifierIteration>,
    halt_on_error: bool,
    halted: bool,
}

impl CoupledVerifier {
    pub fn new(st: VerifierState, halt_on_error: bool) -> Self {
        CoupledVerifier {
            st,
            current: None,
            halt_on_error,
            halted: false,
        }
    }
}

impl Program for CoupledVerifier {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        if self.halted {
            return Status::Finished;
        }
        if self.current.is_none() {
            let Some((label, arg)) = env.next_op() else {
                return Status::Finished;
            };
            let op = self.st.star.next_op(env.process(), &label, arg);
            self.current = Some(VerifierIteration::new(op));
        }
        let iteration = self.current.as_mut().expect("set above");
        if let Some((_, verdict)) = iteration.poll(env, &mut self.st) {
            self.current = None;
            self.halted = self.halt_on_error && verdict.is_error();
        }
        Status::Running
    }
}

enum ClientStage {
    Star(StarOp),
    Write(UpdateOp),
}

/// Monitor-mode client: wrapped operations whose tuples go to the result array.
pub struct MonitorClient {
    star: StarState,
    results: Arc<TupleSet>,
    writer: SnapWriter,
    results_engine: Engine,
    current: Option<ClientStage>,
}

impl MonitorClient {
    pub fn new(config: WrapperConfig, results_engine: Engine) -> Self {
        MonitorClient {
            star: StarState::new(config),
            results: Arc::new(TupleSet::new()),
            writer: SnapWriter::default(),
            results_engine,
            current: None,
        }
    }
}

impl Program for MonitorClient {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        if self.current.is_none() {
            let Some((label, arg)) = env.next_op() else {
                return Status::Finished;
            };
            let op = self.star.next_op(env.process(), &label, arg);
            self.current = Some(ClientStage::Star(StarOp::new(op)));
        }
        match self.current.as_mut().expect("set above") {
            ClientStage::Star(op) => {
                if let Some((y, view)) = op.poll(env, &mut self.star) {
                    let tuple = ResponseTuple::new(op.op().clone(), y, view);
                    Arc::make_mut(&mut self.results).insert(tuple).expect("fresh uid");
                    let word = Word::Tuples(self.results.clone());
                    let cell = env.process().slot();
                    self.current = Some(ClientStage::Write(UpdateOp::new(Region::Results, cell, word, self.results_engine)));
                }
            }
            ClientStage::Write(update) => {
                if update.poll(env, &mut self.writer) {
                    self.current = None;
                }
            }
        }
        Status::Running
    }
}

/// Monitor-mode verifier: repeatedly snapshots the result array and tests it.
pub struct MonitorVerifier {
    object: Arc<dyn GenLinObject>,
    cache: VerdictCache,
    engine: Engine,
    scan: Option<ScanOp>,
}

impl MonitorVerifier {
    pub fn new(object: Arc<dyn GenLinObject>, cache: VerdictCache, engine: Engine) -> Self {
        MonitorVerifier {
            object,
            cache,
            engine,
            scan: None,
        }
    }
}

impl Program for MonitorVerifier {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        let engine = self.engine;
        let scan = self.scan.get_or_insert_with(|| ScanOp::new(Region::Results, engine));
        if let Some(result) = scan.poll(env) {
            self.scan = None;
            let verdict = decide(self.object.as_ref(), &union_tuples(&result.words), &self.cache);
            env.note(Action::Verdict { op: None, verdict });
        }
        Status::Running
    }
}

/// How processes are organized in a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every process verifies its own operations.
    Coupled,
    /// `verifiers` extra processes poll the tuples written by the clients.
    Monitor { verifiers: usize },
}

/// Options shared by the verification set-ups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VerifyConfig {
    pub wrapper: WrapperConfig,
    pub results_engine: Engine,
    pub halt_on_error: bool,
}

/// A simulator with `clients` verifying processes, plus monitor processes in
/// monitor mode (numbered after the clients).
pub fn verifier_sim(
    mode: Mode,
    clients: usize,
    config: VerifyConfig,
    object: Arc<dyn GenLinObject>,
    inner: Box<dyn InnerImpl>,
    ops: Box<dyn OpSource>,
) -> Sim {
    let cache = VerifierState::shared_cache();
    let (n, programs): (usize, Vec<Box<dyn Program>>) = match mode {
        Mode::Coupled => (
            clients,
            (0..clients)
                .map(|_| {
                    let st = VerifierState::new(config.wrapper, config.results_engine, object.clone(), cache.clone());
                    Box::new(CoupledVerifier::new(st, config.halt_on_error)) as Box<dyn Program>
                })
                .collect(),
        ),
        Mode::Monitor { verifiers } => {
            let mut programs: Vec<Box<dyn Program>> = (0..clients)
                .map(|_| Box::new(MonitorClient::new(config.wrapper, config.results_engine)) as Box<dyn Program>)
                .collect();
            programs.extend((0..verifiers).map(|_| {
                Box::new(MonitorVerifier::new(object.clone(), cache.clone(), config.results_engine)) as Box<dyn Program>
            }));
            (clients + verifiers, programs)
        }
    };
    let mem: Memory = wrapper_memory(clients);
    Sim::new(World::new(n, mem, inner, ops), programs)
}

/// Outcome of a finished verification run.
#[derive(Debug, Clone)]
pub struct VerificationRun {
    pub log: RecordedExecution,
    pub verdicts: Vec<VerdictRecord>,
    pub summary: RunSummary,
}

impl VerificationRun {
    pub fn from_sim(sim: Sim, summary: RunSummary) -> Self {
        let log = sim.into_log();
        let verdicts = log.verdicts();
        VerificationRun { log, verdicts, summary }
    }

    pub fn first_error(&self) -> Option<&VerdictRecord> {
        self.verdicts.iter().find(|v| v.verdict.is_error())
    }

    pub fn errors(&self) -> impl Iterator<Item = &VerdictRecord> {
        self.verdicts.iter().filter(|v| v.verdict.is_error())
    }

    /// One-line summary. A run without error only shows that no violation
    /// was found within its budget.
    pub fn result_line(&self) -> String {
        match self.first_error() {
            Some(v) => format!("RESULT: VIOLATION {}", v.step),
            None => format!("RESULT: SOUND (no violation within {} steps)", self.summary.steps),
        }
    }
}

/// Builds and runs a verification set-up.
#[allow(clippy::too_many_arguments)]
pub fn run_verification(
    mode: Mode,
    clients: usize,
    config: VerifyConfig,
    object: Arc<dyn GenLinObject>,
    inner: Box<dyn InnerImpl>,
    ops: Box<dyn OpSource>,
    schedule: &Schedule,
    budget: u64,
) -> VerificationRun {
    let mut sim = verifier_sim(mode, clients, config, object, inner, ops);
    let summary = sim.run(schedule, budget);
    VerificationRun::from_sim(sim, summary)
}
