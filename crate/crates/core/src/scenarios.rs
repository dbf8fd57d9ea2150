//! Canned executions: worked examples, the schedules behind the
//! impossibility of verifying an implementation directly, and randomized
//! campaigns.
//!
//! Every scenario is deterministic. Simulated ones use the atomic snapshot
//! engine and scripted inner implementations, so a wrapped operation takes
//! exactly six steps: invoke, announce, inner invoke, inner response,
//! snapshot and respond.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::enforce::{buggy_queue_thm1, enforced_sim, inner_by_name, star_sim, ScriptedInner, WrapperConfig};
use crate::format::{parse_tuples, write_tuples};
use crate::history::{equivalent, Event, History, OpDescriptor, ProcessId, Uid};
use crate::membership::{check_linearization, is_linearizable, lin_object, GenLinObject};
use crate::sim::{Action, Engine, Env, Layer, Memory, Program, RecordedExecution, Region, Schedule, Sim, Status, Word, World};
use crate::spec::{by_name, SeqSpec};
use crate::value::Value;
use crate::verifier::{run_verification, Mode, Verdict, VerificationRun, VerifyConfig};
use crate::views::{build_history, check_returned_views, lambda_of, tighten, validate_views, visible_part};
use crate::workload::{RandomOps, ScriptedOps};

/// A scenario's expected claim did not hold.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("scenario {scenario}: {message}")]
pub struct AssertionFailure {
    pub scenario: String,
    pub message: String,
}

/// Text produced by a scenario whose assertions all held.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioReport {
    pub name: String,
    pub lines: Vec<String>,
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "== {}", self.name)?;
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

type Outcome = Result<ScenarioReport, AssertionFailure>;

#[derive(Clone, Copy)]
pub struct ScenarioSpec {
    pub name: &'static str,
    pub summary: &'static str,
    /// Inner implementation used, or `none` for pure history examples.
    pub inner: &'static str,
    /// Explicit schedule as `(process, steps)` segments; empty when there is
    /// none or the scenario builds its own.
    pub schedule: &'static [(u32, usize)],
    /// The claims checked.
    pub expected: &'static str,
    run: fn(&ScenarioSpec) -> Outcome,
}

impl fmt::Debug for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

impl ScenarioSpec {
    pub fn run(&self) -> Outcome {
        (self.run)(self)
    }

    fn fail(&self, message: impl Into<String>) -> AssertionFailure {
        AssertionFailure {
            scenario: self.name.to_string(),
            message: message.into(),
        }
    }

    fn expect(&self, cond: bool, message: impl Into<String>) -> Result<(), AssertionFailure> {
        if cond {
            Ok(())
        } else {
            Err(self.fail(message))
        }
    }
}

/// All shipped scenarios.
pub fn figure_scenarios() -> Vec<ScenarioSpec> {
    vec![
        ScenarioSpec {
            name: "stack-executions",
            summary: "two stack executions with the same per-process behaviour",
            inner: "none",
            schedule: &[],
            expected: "first linearizable, second not, projections equal",
            run: run_stack_executions,
        },
        ScenarioSpec {
            name: "stack-linearization-top",
            summary: "overlapping pushes and pops with a unique linearization",
            inner: "none",
            schedule: &[],
            expected: "linearizable as Push(2) Push(1) Pop():1 Pop():2",
            run: run_linearization_top,
        },
        ScenarioSpec {
            name: "stack-linearization-bottom",
            summary: "pops in the wrong order after sequential pushes",
            inner: "none",
            schedule: &[],
            expected: "not linearizable",
            run: run_linearization_bottom,
        },
        ScenarioSpec {
            name: "stretch-top",
            summary: "inner enqueue takes effect before the inner dequeue",
            inner: "scripted",
            schedule: &[(1, 2), (2, 2), (2, 2), (1, 2), (1, 2), (2, 2)],
            expected: "inner, wrapped and detected histories all linearizable",
            run: run_stretch_top,
        },
        ScenarioSpec {
            name: "stretch-bottom",
            summary: "inner dequeue returns 1 before the enqueue starts, but both announce first",
            inner: "scripted",
            schedule: &[(1, 2), (2, 2), (1, 2), (2, 2), (1, 2), (2, 2)],
            expected: "inner history not linearizable, detected history linearizable",
            run: run_stretch_bottom,
        },
        ScenarioSpec {
            name: "shrink-top",
            summary: "the dequeue sees only itself although the enqueue was invoked earlier",
            inner: "scripted",
            schedule: &[(2, 1), (1, 5), (2, 5), (1, 1)],
            expected: "wrapped history linearizable, detected history not (witness reported)",
            run: run_shrink_top,
        },
        ScenarioSpec {
            name: "shrink-bottom",
            summary: "dequeue completes before the enqueue is invoked",
            inner: "scripted",
            schedule: &[(1, 6), (2, 6)],
            expected: "wrapped and detected histories not linearizable",
            run: run_shrink_bottom,
        },
        ScenarioSpec {
            name: "fix",
            summary: "the enqueue is invoked early and announced late",
            inner: "scripted",
            schedule: &[(2, 1), (1, 4), (2, 3), (1, 2), (2, 2)],
            expected: "inner history not linearizable, wrapped history linearizable",
            run: run_fix,
        },
        ScenarioSpec {
            name: "adversarial-verifier",
            summary: "coupled verifier on buggy-thm1 with the adversarial schedule and a fair tail",
            inner: "buggy-thm1",
            schedule: &[(1, 6), (2, 6), (1, 2), (2, 2), (1, 8), (2, 8), (1, 8), (2, 8)],
            expected: "an error verdict, and every verdict after the first error is an error",
            run: run_adversarial_verifier,
        },
        ScenarioSpec {
            name: "adversarial-enforced",
            summary: "self-enforced queue over buggy-thm1 with the adversarial schedule and a fair tail",
            inner: "buggy-thm1",
            schedule: &[(1, 7), (2, 7), (1, 3), (2, 3)],
            expected: "p1's first operation returns error with a non-linearizable certificate",
            run: run_adversarial_enforced,
        },
        ScenarioSpec {
            name: "impossibility",
            summary: "a generic verifier cannot tell apart two executions of buggy-thm1",
            inner: "buggy-thm1",
            schedule: E_SCHEDULE,
            expected: "identical observations in both executions for every decision function",
            run: run_impossibility,
        },
    ]
}

pub fn scenario_by_name(name: &str) -> Option<ScenarioSpec> {
    figure_scenarios().into_iter().find(|s| s.name == name)
}

fn queue() -> Arc<dyn SeqSpec> {
    by_name("queue").expect("queue is in the catalog")
}

fn member(spec: &dyn SeqSpec, h: &History) -> bool {
    is_linearizable(h, spec).is_ok()
}

fn verdict_word(m: bool) -> &'static str {
    if m {
        "linearizable"
    } else {
        "NOT linearizable"
    }
}

// --- pure history examples -------------------------------------------------

fn stack_pair() -> (History, History) {
    let mut top = crate::history::HistoryBuilder::new();
    top.invoke(1, "Push", 1);
    top.invoke(2, "Pop", ());
    top.respond(1, true);
    top.respond(2, 1);
    let mut bottom = crate::history::HistoryBuilder::new();
    bottom.invoke(2, "Pop", ());
    bottom.respond(2, 1);
    bottom.invoke(1, "Push", 1);
    bottom.respond(1, true);
    (top.build(), bottom.build())
}

/// Overlapping pushes and pops; the only linearization is
/// Push(2) Push(1) Pop():1 Pop():2.
pub fn linearization_example_top() -> History {
    crate::format::parse_trace(
        "inv p1 1.0 Push(2)\ninv p2 2.0 Push(1)\nres p1 1.0 true\ninv p3 3.0 Pop()\nres p2 2.0 true\n\
         inv p1 1.1 Pop()\nres p3 3.0 1\nres p1 1.1 2\n",
    )
    .expect("well-formed example")
}

/// Sequential pushes of 2 then 1 followed by pops returning 2 then 1.
pub fn linearization_example_bottom() -> History {
    crate::format::parse_trace(
        "inv p1 1.0 Push(2)\nres p1 1.0 true\ninv p2 2.0 Push(1)\nres p2 2.0 true\n\
         inv p3 3.0 Pop()\nres p3 3.0 2\ninv p1 1.1 Pop()\nres p1 1.1 1\n",
    )
    .expect("well-formed example")
}

fn run_stack_executions(s: &ScenarioSpec) -> Outcome {
    let stack = by_name("stack").expect("stack is in the catalog");
    let (top, bottom) = stack_pair();
    let (mt, mb) = (member(stack.as_ref(), &top), member(stack.as_ref(), &bottom));
    s.expect(mt, "top execution should be linearizable")?;
    s.expect(!mb, "bottom execution should not be linearizable")?;
    s.expect(equivalent(&top, &bottom), "per-process projections differ")?;
    Ok(ScenarioReport {
        name: s.name.into(),
        lines: vec![
            format!("top: {}", verdict_word(mt)),
            format!("bottom: {}", verdict_word(mb)),
            "per-process projections: equal".into(),
        ],
    })
}

fn run_linearization_top(s: &ScenarioSpec) -> Outcome {
    let stack = by_name("stack").expect("stack is in the catalog");
    let h = linearization_example_top();
    let lin = is_linearizable(&h, stack.as_ref()).map_err(|_| s.fail("history should be linearizable"))?;
    s.expect(check_linearization(&h, stack.as_ref(), &lin), "emitted linearization is invalid")?;
    let rendered = lin.to_string();
    s.expect(
        rendered == "<Push(2):true> <Push(1):true> <Pop():1> <Pop():2>",
        format!("unexpected linearization {rendered}"),
    )?;
    Ok(ScenarioReport {
        name: s.name.into(),
        lines: vec!["linearizable".into(), format!("linearization: {rendered}")],
    })
}

fn run_linearization_bottom(s: &ScenarioSpec) -> Outcome {
    let stack = by_name("stack").expect("stack is in the catalog");
    let h = linearization_example_bottom();
    s.expect(!member(stack.as_ref(), &h), "history should not be linearizable")?;
    Ok(ScenarioReport {
        name: s.name.into(),
        lines: vec!["NOT linearizable".into()],
    })
}

// --- wrapped two-process queue executions ------------------------------------

/// The four histories of a wrapped execution and their membership.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub inner: History,
    pub star: History,
    pub tight: History,
    pub detected: History,
    pub inner_member: bool,
    pub star_member: bool,
    pub tight_member: bool,
    pub detected_member: bool,
}

impl LayerReport {
    fn lines(&self) -> Vec<String> {
        vec![
            format!("inner history: {}", verdict_word(self.inner_member)),
            format!("wrapped history: {}", verdict_word(self.star_member)),
            format!("tight history: {}", verdict_word(self.tight_member)),
            format!("detected history: {}", verdict_word(self.detected_member)),
        ]
    }
}

/// p1 dequeues and p2 enqueues 1; the inner queue answers 1 and true.
fn two_process_queue(schedule: &[(u32, usize)]) -> (RecordedExecution, LayerReport) {
    let config = WrapperConfig {
        engine: Engine::Atomic,
        bounded: false,
    };
    let inner = ScriptedInner::new().script(1, [Value::Int(1)]).script(2, [Value::Bool(true)]);
    let ops = ScriptedOps::new()
        .script(1, &[("Deq", Value::Unit)])
        .script(2, &[("Enq", Value::Int(1))]);
    let mut sim = star_sim(2, config, Box::new(inner), Box::new(ops));
    sim.run(&Schedule::segments(schedule), 1_000);
    let log = sim.into_log();
    let report = layer_report(&log, queue().as_ref());
    (log, report)
}

/// Membership of the inner, wrapped, tight and detected histories of `log`.
///
/// # Panics
///
/// Panics if the log was not produced by the wrapper.
pub fn layer_report(log: &RecordedExecution, spec: &dyn SeqSpec) -> LayerReport {
    let inner = log.history(Layer::Inner).expect("simulator logs are well-formed");
    let star = log.history(Layer::Star).expect("simulator logs are well-formed");
    let tight = tighten(log).expect("wrapper logs are complete");
    let detected = build_history(&lambda_of(log).expect("wrapper logs are complete")).expect("views are consistent");
    LayerReport {
        inner_member: member(spec, &inner),
        star_member: member(spec, &star),
        tight_member: member(spec, &tight),
        detected_member: member(spec, &detected),
        inner,
        star,
        tight,
        detected,
    }
}

type LayerCheck<'a> = (&'a str, fn(&LayerReport) -> bool);

fn layered(s: &ScenarioSpec, checks: &[LayerCheck<'_>]) -> Outcome {
    let (_, r) = two_process_queue(s.schedule);
    for (claim, check) in checks {
        s.expect(check(&r), format!("expected {claim}"))?;
    }
    let mut lines = r.lines();
    lines.push(format!("detected history:\n{}", r.detected));
    Ok(ScenarioReport { name: s.name.into(), lines })
}

fn run_stretch_top(s: &ScenarioSpec) -> Outcome {
    layered(
        s,
        &[
            ("inner member", |r| r.inner_member),
            ("wrapped member", |r| r.star_member),
            ("detected member", |r| r.detected_member),
        ],
    )
}

fn run_stretch_bottom(s: &ScenarioSpec) -> Outcome {
    layered(
        s,
        &[
            ("inner non-member", |r| !r.inner_member),
            ("detected member", |r| r.detected_member),
        ],
    )
}

fn run_shrink_top(s: &ScenarioSpec) -> Outcome {
    layered(
        s,
        &[
            ("wrapped member", |r| r.star_member),
            ("detected non-member", |r| !r.detected_member),
        ],
    )
}

fn run_shrink_bottom(s: &ScenarioSpec) -> Outcome {
    layered(
        s,
        &[
            ("wrapped non-member", |r| !r.star_member),
            ("detected non-member", |r| !r.detected_member),
        ],
    )
}

fn run_fix(s: &ScenarioSpec) -> Outcome {
    layered(
        s,
        &[
            ("inner non-member", |r| !r.inner_member),
            ("wrapped member", |r| r.star_member),
        ],
    )
}

// --- the adversarial schedule against a buggy queue ----------------------------

/// p1 starts with a dequeue and p2 with an enqueue of 1, then both keep dequeuing.
pub fn adversarial_ops() -> ScriptedOps {
    ScriptedOps::new()
        .script(1, &[("Deq", Value::Unit)])
        .script(2, &[("Enq", Value::Int(1))])
        .then_repeat("Deq", Value::Unit)
}

/// Coupled verification of `buggy-thm1` under the adversarial schedule
/// followed by round-robin.
pub fn adversarial_verifier_run(schedule: &[(u32, usize)], budget: u64) -> VerificationRun {
    let config = VerifyConfig {
        wrapper: WrapperConfig {
            engine: Engine::Atomic,
            bounded: false,
        },
        results_engine: Engine::Atomic,
        halt_on_error: false,
    };
    run_verification(
        Mode::Coupled,
        2,
        config,
        Arc::new(lin_object(queue())),
        buggy_queue_thm1(),
        Box::new(adversarial_ops()),
        &Schedule::segments(schedule).with_fair_tail(),
        budget,
    )
}

/// Checks that a run's verdicts are an error at some point and errors ever after.
pub fn completeness_and_stability(run: &VerificationRun) -> Result<u64, String> {
    let first = run.first_error().ok_or("no error verdict")?.step;
    for (step, start, error) in verdict_scans(&run.log) {
        if start > first && !error {
            return Err(format!(
                "verdict at step {step} is OK although its scan began at {start}, after the first error at {first}"
            ));
        }
    }
    Ok(first)
}

/// For each verdict: its step, the step its final scan of the results began,
/// and whether it is an error. A scan still running at the first error may
/// legitimately miss it.
fn verdict_scans(log: &RecordedExecution) -> Vec<(u64, u64, bool)> {
    let mut start: HashMap<ProcessId, u64> = HashMap::new();
    let mut out = Vec::new();
    for r in log.records() {
        match &r.action {
            Action::Write(loc) if loc.region == Region::Results => {
                start.remove(&r.process);
            }
            Action::Read(loc) if loc.region == Region::Results => {
                start.entry(r.process).or_insert(r.step);
            }
            Action::Snapshot(Region::Results) => {
                start.entry(r.process).or_insert(r.step);
            }
            Action::Verdict { verdict, .. } => {
                let begun = start.remove(&r.process).unwrap_or(r.step);
                out.push((r.step, begun, verdict.is_error()));
            }
            _ => {}
        }
    }
    out
}

/// Every error verdict of a run carries a non-member witness that is
/// rebuilt exactly from its tuples, also after a trip through the text format.
pub fn witnesses_valid(run: &VerificationRun, object: &dyn GenLinObject) -> Result<usize, String> {
    let mut n = 0;
    for v in run.errors() {
        let Verdict::Error { witness, tuples } = &v.verdict else { continue };
        if object.member(witness) {
            return Err(format!("witness at step {} is linearizable", v.step));
        }
        let rebuilt = build_history(tuples).map_err(|e| e.to_string())?;
        let reparsed = parse_tuples(&write_tuples(tuples)).map_err(|e| e.to_string())?;
        let rebuilt_text = build_history(&reparsed).map_err(|e| e.to_string())?;
        if &rebuilt != witness || &rebuilt_text != witness {
            return Err(format!("witness at step {} does not round-trip", v.step));
        }
        n += 1;
    }
    Ok(n)
}

fn run_adversarial_verifier(s: &ScenarioSpec) -> Outcome {
    let run = adversarial_verifier_run(s.schedule, 160);
    let first = completeness_and_stability(&run).map_err(|m| s.fail(m))?;
    let object = lin_object(queue());
    let witnesses = witnesses_valid(&run, &object).map_err(|m| s.fail(m))?;
    let first_witness = match &run.first_error().expect("checked above").verdict {
        Verdict::Error { witness, .. } => witness.to_string(),
        Verdict::Ok => String::new(),
    };
    Ok(ScenarioReport {
        name: s.name.into(),
        lines: vec![
            format!("verdicts: {} ({} errors, all valid witnesses)", run.verdicts.len(), witnesses),
            format!("first error at step {first}"),
            format!("first witness:\n{}", first_witness.trim_end()),
            run.result_line(),
        ],
    })
}

fn run_adversarial_enforced(s: &ScenarioSpec) -> Outcome {
    let config = WrapperConfig {
        engine: Engine::Atomic,
        bounded: false,
    };
    let mut sim = enforced_sim(
        2,
        config,
        Engine::Atomic,
        Arc::new(lin_object(queue())),
        buggy_queue_thm1(),
        Box::new(adversarial_ops()),
        false,
    );
    sim.run(&Schedule::segments(s.schedule).with_fair_tail(), 120);
    let certificate = crate::enforce::certificate(sim.world()).map_err(|e| s.fail(e.to_string()))?;
    let log = sim.into_log();
    let enforced = log.history(Layer::Enforced).map_err(|e| s.fail(e.to_string()))?;
    let first_p1 = enforced
        .operations()
        .iter()
        .find(|o| o.op.process == ProcessId::new(1))
        .ok_or_else(|| s.fail("p1 ran no operation"))?;
    s.expect(first_p1.value() == Some(&Value::Error), "p1's first operation should return error")?;
    s.expect(!member(queue().as_ref(), &certificate), "certificate should not be linearizable")?;
    let errors = enforced.operations().iter().filter(|o| o.value() == Some(&Value::Error)).count();
    Ok(ScenarioReport {
        name: s.name.into(),
        lines: vec![
            format!("p1's first operation returned {}", first_p1.value().expect("checked above")),
            format!("operations returning error: {errors} of {}", enforced.operations().len()),
            format!("certificate:\n{}", certificate.to_string().trim_end()),
        ],
    })
}

// --- indistinguishability -----------------------------------------------------

/// A verdict function for the generic verifier: given the log words it
/// read, is there an error?
pub trait Decision: Send + Sync {
    fn name(&self) -> &'static str;

    fn error(&self, me: ProcessId, seen: &[Word]) -> bool;
}

fn records(seen: &[Word]) -> Vec<Vec<(OpDescriptor, Option<Value>)>> {
    seen.iter()
        .map(|w| match w {
            Word::Record(r) => r.as_ref().clone(),
            _ => Vec::new(),
        })
        .collect()
}

/// Never reports an error.
pub struct Lenient;

/// Always reports an error.
pub struct Alarmist;

/// Reports an error unless the logs fit a queue with every operation concurrent.
pub struct Concurrent;

/// Reports an error unless the logs fit a queue when the processes' operations
/// are laid out one process after the other.
pub struct ProcessOrder;

/// Reports an error when the number of responses seen is odd.
pub struct Parity;

impl Decision for Lenient {
    fn name(&self) -> &'static str {
        "lenient"
    }

    fn error(&self, _: ProcessId, _: &[Word]) -> bool {
        false
    }
}

impl Decision for Alarmist {
    fn name(&self) -> &'static str {
        "alarmist"
    }

    fn error(&self, _: ProcessId, _: &[Word]) -> bool {
        true
    }
}

impl Decision for Concurrent {
    fn name(&self) -> &'static str {
        "concurrent"
    }

    fn error(&self, _: ProcessId, seen: &[Word]) -> bool {
        let all: Vec<_> = records(seen).into_iter().flatten().collect();
        let mut events: Vec<Event> = all.iter().map(|(op, _)| Event::invoke(op.clone())).collect();
        events.extend(all.iter().filter_map(|(op, v)| v.clone().map(|v| Event::ret(op.clone(), v))));
        let h = History::validate(events).or_else(|_| History::validate(sequential(&records(seen))));
        h.map_or(true, |h| !member(queue().as_ref(), &h))
    }
}

fn sequential(per_process: &[Vec<(OpDescriptor, Option<Value>)>]) -> Vec<Event> {
    let mut events = Vec::new();
    for log in per_process {
        for (op, v) in log {
            events.push(Event::invoke(op.clone()));
            if let Some(v) = v {
                events.push(Event::ret(op.clone(), v.clone()));
            }
        }
    }
    events
}

impl Decision for ProcessOrder {
    fn name(&self) -> &'static str {
        "process-order"
    }

    fn error(&self, _: ProcessId, seen: &[Word]) -> bool {
        History::validate(sequential(&records(seen))).map_or(true, |h| !member(queue().as_ref(), &h))
    }
}

impl Decision for Parity {
    fn name(&self) -> &'static str {
        "parity"
    }

    fn error(&self, _: ProcessId, seen: &[Word]) -> bool {
        records(seen).iter().flatten().filter(|(_, v)| v.is_some()).count() % 2 == 1
    }
}

/// The decision functions the demonstration is run with.
pub fn shipped_decisions() -> Vec<Arc<dyn Decision>> {
    vec![Arc::new(Lenient), Arc::new(Alarmist), Arc::new(Concurrent), Arc::new(ProcessOrder), Arc::new(Parity)]
}

/// Everything a process of the generic verifier learns, one line per step.
pub type Observations = Arc<Mutex<Vec<String>>>;

enum GenericStage {
    LogInvocation,
    InnerInvoke(OpDescriptor),
    InnerRespond(OpDescriptor),
    LogResponse,
    Read,
}

/// The generic verifier: each iteration logs the invocation to its own
/// register, runs the operation on the implementation, logs the response,
/// reads all registers at once and applies the decision function.
pub struct GenericVerifier {
    decision: Arc<dyn Decision>,
    log: Vec<(OpDescriptor, Option<Value>)>,
    stage: GenericStage,
    seen: Observations,
}

impl GenericVerifier {
    pub fn new(decision: Arc<dyn Decision>, seen: Observations) -> Self {
        GenericVerifier {
            decision,
            log: Vec::new(),
            stage: GenericStage::LogInvocation,
            seen,
        }
    }

    fn publish(&self, env: &mut Env<'_>) {
        let cell = env.process().slot();
        env.write(Region::Results, cell, Word::Record(Arc::new(self.log.clone())), None);
    }
}

impl Program for GenericVerifier {
    fn step(&mut self, env: &mut Env<'_>) -> Status {
        let p = env.process();
        let line = match std::mem::replace(&mut self.stage, GenericStage::Read) {
            GenericStage::LogInvocation => {
                let Some((label, arg)) = env.next_op() else {
                    return Status::Finished;
                };
                let op = OpDescriptor::new(p, Uid::new(p, self.log.len() as u32), &label, arg);
                self.log.push((op.clone(), None));
                self.publish(env);
                self.stage = GenericStage::InnerInvoke(op.clone());
                format!("wrote invocation {}", op.call())
            }
            GenericStage::InnerInvoke(op) => {
                env.inner_invoke(&op);
                self.stage = GenericStage::InnerRespond(op);
                "invoked".to_string()
            }
            GenericStage::InnerRespond(op) => match env.inner_step(&op) {
                Some(v) => {
                    self.log.last_mut().expect("invocation logged").1 = Some(v.clone());
                    self.stage = GenericStage::LogResponse;
                    format!("response {v}")
                }
                None => {
                    self.stage = GenericStage::InnerRespond(op);
                    "inner step".to_string()
                }
            },
            GenericStage::LogResponse => {
                self.publish(env);
                self.stage = GenericStage::Read;
                "wrote response".to_string()
            }
            GenericStage::Read => {
                let words = env.snapshot(Region::Results);
                let error = self.decision.error(p, &words);
                self.stage = GenericStage::LogInvocation;
                let rendered: Vec<String> = records(&words)
                    .iter()
                    .map(|log| {
                        log.iter()
                            .map(|(op, v)| match v {
                                Some(v) => format!("{}:{v}", op.call()),
                                None => op.call(),
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect();
                format!("read [{}] decided {}", rendered.join(" | "), if error { "error" } else { "ok" })
            }
        };
        self.seen.lock().expect("observation lock").push(line);
        Status::Running
    }
}

/// Execution E: each process logs its invocation, then p1 runs its first
/// operation on the implementation before p2 runs its own, then each logs
/// its response and reads; after that whole iterations alternate.
pub const E_SCHEDULE: &[(u32, usize)] = &[(1, 1), (2, 1), (1, 2), (2, 2), (1, 2), (2, 2)];
/// Execution F: as E with the third and fourth segments swapped.
pub const F_SCHEDULE: &[(u32, usize)] = &[(1, 1), (2, 1), (2, 2), (1, 2), (1, 2), (2, 2)];

/// Rounds of whole iterations appended to both executions.
pub const IMPOSSIBILITY_ROUNDS: usize = 6;

fn generic_run(segments: &[(u32, usize)], decision: &Arc<dyn Decision>) -> (RecordedExecution, Vec<Vec<String>>) {
    let mut all: Vec<(u32, usize)> = segments.to_vec();
    for k in 0..IMPOSSIBILITY_ROUNDS {
        all.push((if k % 2 == 0 { 2 } else { 1 }, 5));
    }
    let logs: Vec<Observations> = (0..2).map(|_| Arc::new(Mutex::new(Vec::new()))).collect();
    let programs: Vec<Box<dyn Program>> = logs
        .iter()
        .map(|l| Box::new(GenericVerifier::new(decision.clone(), l.clone())) as Box<dyn Program>)
        .collect();
    let world = World::new(
        2,
        Memory::new().with_array(Region::Results, 2),
        buggy_queue_thm1(),
        Box::new(adversarial_ops()),
    );
    let mut sim = Sim::new(world, programs);
    sim.run(&Schedule::segments(&all), 10_000);
    let seen = logs.iter().map(|l| l.lock().expect("observation lock").clone()).collect();
    (sim.into_log(), seen)
}

/// Result of replaying E and F through the generic verifier.
#[derive(Debug, Clone)]
pub struct ImpossibilityReport {
    /// Decision functions tried and whether observations matched for each.
    pub decisions: Vec<(String, bool)>,
    /// Length in events of the shortest non-linearizable prefix of E's inner history.
    pub e_bad_prefix: Option<usize>,
    /// Whether every prefix of F's inner history is linearizable.
    pub f_prefixes_member: bool,
    pub e_inner: History,
    pub f_inner: History,
}

/// Replays E and F for every shipped decision function.
pub fn impossibility_demo() -> Result<ImpossibilityReport, AssertionFailure> {
    let spec = queue();
    let fail = |message: String| AssertionFailure {
        scenario: "impossibility".into(),
        message,
    };
    let mut decisions = Vec::new();
    let mut inner = None;
    for d in shipped_decisions() {
        let (e_log, e_seen) = generic_run(E_SCHEDULE, &d);
        let (f_log, f_seen) = generic_run(F_SCHEDULE, &d);
        let same = e_seen == f_seen;
        if !same {
            return Err(fail(format!("observations differ under decision `{}`", d.name())));
        }
        decisions.push((d.name().to_string(), same));
        let e = e_log.history(Layer::Inner).map_err(|e| fail(e.to_string()))?;
        let f = f_log.history(Layer::Inner).map_err(|e| fail(e.to_string()))?;
        inner.get_or_insert((e, f));
    }
    let (e_inner, f_inner) = inner.expect("at least one decision function");
    let e_bad_prefix = (0..=e_inner.len()).find(|&k| !member(spec.as_ref(), &e_inner.prefix(k)));
    let f_prefixes_member = (0..=f_inner.len()).all(|k| member(spec.as_ref(), &f_inner.prefix(k)));
    if e_bad_prefix.is_none() {
        return Err(fail("E's inner history has no non-linearizable prefix".into()));
    }
    if !f_prefixes_member {
        return Err(fail("some prefix of F's inner history is not linearizable".into()));
    }
    Ok(ImpossibilityReport {
        decisions,
        e_bad_prefix,
        f_prefixes_member,
        e_inner,
        f_inner,
    })
}

fn run_impossibility(s: &ScenarioSpec) -> Outcome {
    let r = impossibility_demo()?;
    let mut lines: Vec<String> = r
        .decisions
        .iter()
        .map(|(name, same)| format!("decision {name}: observations {}", if *same { "identical" } else { "DIFFER" }))
        .collect();
    let k = r.e_bad_prefix.expect("checked by the demo");
    lines.push(format!("E inner history: prefix of {k} events is NOT linearizable"));
    lines.push(format!("{}", r.e_inner.prefix(k)).trim_end().to_string());
    lines.push(format!("F inner history: all {} prefixes linearizable", r.f_inner.len() + 1));
    Ok(ScenarioReport { name: s.name.into(), lines })
}

// --- reproducing a given inner history under the wrapper -------------------------

/// Runs the wrapper so that its history and the inner history both equal
/// `h`: every invocation of `h` becomes invoke, announce and inner invoke
/// of that process, and every response becomes inner response, snapshot
/// and respond.
///
/// Operation uids of `h` must be `<process>.<k>` for the k-th operation of
/// each process, counting from 0.
pub fn embed_history(h: &History) -> RecordedExecution {
    let mut inner = ScriptedInner::new();
    let mut ops = ScriptedOps::new();
    let mut order = Vec::new();
    for e in h.events() {
        let p = e.process();
        match &e.kind {
            crate::history::EventKind::Invoke => {
                ops = ops.script(p.index(), &[(e.op.label.as_ref(), e.op.arg.clone())]);
            }
            crate::history::EventKind::Return(v) => inner = inner.script(p.index(), [v.clone()]),
        }
        order.push((p.index(), 3));
    }
    let n = h.processes().iter().map(|p| p.slot() + 1).max().unwrap_or(0);
    let config = WrapperConfig {
        engine: Engine::Atomic,
        bounded: false,
    };
    let mut sim = star_sim(n, config, Box::new(inner), Box::new(ops));
    sim.run(&Schedule::segments(&order), u64::MAX);
    sim.into_log()
}

// --- randomized campaigns ------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub spec: String,
    /// Inner implementation name, as accepted by [`inner_by_name`].
    pub inner: String,
    pub runs: usize,
    pub seed: u64,
    pub procs: usize,
    pub steps: u64,
    pub mode: Mode,
    pub engine: Engine,
    pub bounded: bool,
}

impl FuzzConfig {
    pub fn new(spec: &str, inner: &str, runs: usize, seed: u64) -> Self {
        FuzzConfig {
            spec: spec.into(),
            inner: inner.into(),
            runs,
            seed,
            procs: 3,
            steps: 300,
            mode: Mode::Coupled,
            engine: Engine::Algorithmic,
            bounded: false,
        }
    }
}

/// Aggregates of a campaign. Every `*_violations` count must be zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuzzStats {
    pub runs: usize,
    pub runs_with_error: usize,
    pub verdicts: usize,
    pub error_verdicts: usize,
    /// Invalid views in a run's tuples or returned views differing from the log.
    pub view_violations: usize,
    /// Rebuilt history not equivalent to the tight history, or different precedences.
    pub sketch_violations: usize,
    /// Inner history linearizable but tight history not, or tight history
    /// linearizable but wrapped history not.
    pub chain_violations: usize,
    /// Error witnesses that are linearizable or do not round-trip.
    pub witness_violations: usize,
    /// Steps from the first non-linearizable prefix of the wrapped history to
    /// the first error verdict, per run where both exist.
    pub latencies: Vec<u64>,
    /// Runs whose wrapped history was never non-linearizable but got an error verdict.
    pub errors_without_wrapped_violation: usize,
}

impl FuzzStats {
    pub fn invariant_violations(&self) -> usize {
        self.view_violations + self.sketch_violations + self.chain_violations + self.witness_violations
    }

    pub fn merge(&mut self, other: &FuzzStats) {
        self.runs += other.runs;
        self.runs_with_error += other.runs_with_error;
        self.verdicts += other.verdicts;
        self.error_verdicts += other.error_verdicts;
        self.view_violations += other.view_violations;
        self.sketch_violations += other.sketch_violations;
        self.chain_violations += other.chain_violations;
        self.witness_violations += other.witness_violations;
        self.latencies.extend(&other.latencies);
        self.errors_without_wrapped_violation += other.errors_without_wrapped_violation;
    }

    pub fn detection_rate(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.runs_with_error as f64 / self.runs as f64
        }
    }
}

impl fmt::Display for FuzzStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs: {}", self.runs)?;
        writeln!(f, "runs with an error verdict: {} (rate {:.3})", self.runs_with_error, self.detection_rate())?;
        writeln!(f, "verdicts: {} ({} errors)", self.verdicts, self.error_verdicts)?;
        writeln!(f, "view violations: {}", self.view_violations)?;
        writeln!(f, "sketch violations: {}", self.sketch_violations)?;
        writeln!(f, "chain violations: {}", self.chain_violations)?;
        writeln!(f, "witness violations: {}", self.witness_violations)?;
        if self.latencies.is_empty() {
            writeln!(f, "detection latency: n/a")?;
        } else {
            let mean = self.latencies.iter().sum::<u64>() as f64 / self.latencies.len() as f64;
            let max = self.latencies.iter().max().copied().unwrap_or(0);
            writeln!(f, "detection latency: mean {mean:.1} steps, max {max} steps")?;
        }
        write!(f, "errors without a wrapped violation: {}", self.errors_without_wrapped_violation)
    }
}

/// Shortest non-linearizable prefix of `h`, by binary search: prefixes of a
/// linearizable history are linearizable.
fn first_bad_prefix(h: &History, spec: &dyn SeqSpec) -> Option<usize> {
    if member(spec, h) {
        return None;
    }
    let (mut lo, mut hi) = (0, h.len());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if member(spec, &h.prefix(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Checks one verification run and adds it to `stats`.
pub fn audit_run(run: &VerificationRun, spec: &Arc<dyn SeqSpec>, stats: &mut FuzzStats) {
    let object = lin_object(spec.clone());
    let spec = spec.as_ref();
    stats.runs += 1;
    stats.verdicts += run.verdicts.len();
    stats.error_verdicts += run.errors().count();
    if run.first_error().is_some() {
        stats.runs_with_error += 1;
    }
    let log = &run.log;
    let lambda = lambda_of(log);
    let views_ok = check_returned_views(log).is_ok() && lambda.as_ref().is_ok_and(|l| validate_views(l).is_ok());
    if !views_ok {
        stats.view_violations += 1;
    }
    if let (Ok(lambda), Ok(tight)) = (&lambda, tighten(log)) {
        let visible = visible_part(&tight, lambda);
        let sketch_ok = build_history(lambda)
            .is_ok_and(|x| equivalent(&x, &visible) && x.prec_pairs() == visible.prec_pairs());
        if !sketch_ok {
            stats.sketch_violations += 1;
        }
        let inner = log.history(Layer::Inner).expect("simulator logs are well-formed");
        let star = log.history(Layer::Star).expect("simulator logs are well-formed");
        let (mi, mt, ms) = (member(spec, &inner), member(spec, &tight), member(spec, &star));
        if (mi && !mt) || (mt && !ms) {
            stats.chain_violations += 1;
        }
        if let Some(first) = run.first_error() {
            match first_bad_prefix(&star, spec) {
                Some(k) => {
                    let at = log.event_steps(Layer::Star)[k - 1];
                    stats.latencies.push(first.step.saturating_sub(at));
                }
                None => stats.errors_without_wrapped_violation += 1,
            }
        }
    } else {
        stats.sketch_violations += 1;
    }
    if witnesses_valid(run, &object).is_err() {
        stats.witness_violations += 1;
    }
}

/// One run of a campaign, by index.
pub fn fuzz_run(cfg: &FuzzConfig, index: usize) -> VerificationRun {
    let seed = cfg.seed.wrapping_add(index as u64);
    let spec = by_name(&cfg.spec).expect("campaign spec is in the catalog");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let clients = cfg.procs.max(1);
    let verifiers = match cfg.mode {
        Mode::Coupled => 0,
        Mode::Monitor { verifiers } => verifiers,
    };
    let weights: Vec<u32> = (0..clients + verifiers).map(|_| rng.gen_range(1..=4)).collect();
    let schedule = Schedule::bursty(seed, weights, rng.gen_range(1..=12)).with_fair_tail();
    let inner = inner_by_name(&cfg.inner, &spec, seed).expect("campaign inner is known");
    let config = VerifyConfig {
        wrapper: WrapperConfig {
            engine: cfg.engine,
            bounded: cfg.bounded,
        },
        results_engine: cfg.engine,
        halt_on_error: false,
    };
    let domain = rng.gen_range(1..=3);
    let ops = RandomOps::new(&cfg.spec, seed).with_domain(domain);
    run_verification(
        cfg.mode,
        clients,
        config,
        Arc::new(lin_object(spec)),
        inner,
        Box::new(ops),
        &schedule,
        cfg.steps,
    )
}

/// Runs a campaign sequentially and aggregates its statistics.
pub fn fuzz_campaign(cfg: &FuzzConfig) -> FuzzStats {
    let spec = by_name(&cfg.spec).expect("campaign spec is in the catalog");
    let mut stats = FuzzStats::default();
    for i in 0..cfg.runs {
        audit_run(&fuzz_run(cfg, i), &spec, &mut stats);
    }
    stats
}
