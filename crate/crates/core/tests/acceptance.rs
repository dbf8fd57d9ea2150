//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rvlin::audit::{non_register_steps, op_costs};
use rvlin::enforce::{enforced_sim, AtomicInner, WrapperConfig};
use rvlin::gen::{exhaustive_histories, linearizable_history, perturbed_history, similar_variant};
use rvlin::history::{is_similar, ProcessId};
use rvlin::membership::{brute_force_linearizable, check_linearization, is_linearizable, lin_object};
use rvlin::scenarios::{
    adversarial_verifier_run, audit_run, completeness_and_stability, fuzz_run, impossibility_demo,
    linearization_example_bottom, linearization_example_top, scenario_by_name, FuzzConfig, FuzzStats,
};
use rvlin::sim::{snapshot_object_sim, Action, Engine, Layer, Schedule, StopReason};
use rvlin::spec::{by_name, SeqSpec, CATALOG};
use rvlin::verifier::{run_verification, Mode, VerifyConfig};
use rvlin::workload::RandomOps;

/// Bookkeeping steps allowed per wrapped operation or verifier iteration, per process.
const STEP_FACTOR: usize = 10;

type Check = Result<String, String>;

fn spec(name: &str) -> Arc<dyn SeqSpec> {
    by_name(name).expect("catalog spec")
}

fn member(spec: &dyn SeqSpec, h: &rvlin::History) -> bool {
    is_linearizable(h, spec).is_ok()
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let took = started.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn linearization_examples() -> Check {
    let started = Instant::now();
    let stack = spec("stack");
    let top = linearization_example_top();
    let lin = is_linearizable(&top, stack.as_ref()).map_err(|_| "top history rejected")?;
    if !check_linearization(&top, stack.as_ref(), &lin) {
        return Err(format!("emitted linearization {lin} is invalid"));
    }
    let expected = "<Push(2):true> <Push(1):true> <Pop():1> <Pop():2>";
    if lin.to_string() != expected {
        return Err(format!("linearization {lin}, expected {expected}"));
    }
    if member(stack.as_ref(), &linearization_example_bottom()) {
        return Err("bottom history accepted".into());
    }
    within(Duration::from_secs(1), started)?;
    Ok(format!("top accepted as {lin}; bottom rejected"))
}

fn oracle_equivalence() -> Check {
    let started = Instant::now();
    let mut exhaustive = 0;
    for container in ["queue", "stack"] {
        let s = spec(container);
        let histories = exhaustive_histories(container, 5);
        exhaustive += histories.len();
        let bad = histories
            .par_iter()
            .find_any(|h| member(s.as_ref(), h) != brute_force_linearizable(h, s.as_ref()).expect("at most 5 ops"));
        if let Some(h) = bad {
            return Err(format!("disagreement on {container} history\n{h}"));
        }
    }
    let random = 2_000;
    let bad = (0..random).into_par_iter().find_map_any(|i: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let name = CATALOG[i as usize % CATALOG.len()];
        let s = spec(name);
        let ops = rng.gen_range(1..=8);
        let procs = rng.gen_range(1..=4);
        let h = perturbed_history(s.as_ref(), procs, ops, &mut rng);
        let agree = member(s.as_ref(), &h) == brute_force_linearizable(&h, s.as_ref()).expect("at most 8 ops");
        (!agree).then(|| format!("disagreement on {name} history\n{h}"))
    });
    if let Some(msg) = bad {
        return Err(msg);
    }
    within(Duration::from_secs(300), started)?;
    Ok(format!("{exhaustive} exhaustive and {random} random histories, 0 disagreements"))
}

fn closure_sampling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..200 {
        let s = spec(CATALOG[i % CATALOG.len()]);
        let h = linearizable_history(s.as_ref(), 3, 8, &mut rng);
        if let Some(k) = (0..=h.len()).find(|&k| !member(s.as_ref(), &h.prefix(k))) {
            return Err(format!("prefix of length {k} rejected\n{h}"));
        }
    }
    for i in 0..200 {
        let s = spec(CATALOG[i % CATALOG.len()]);
        let f = linearizable_history(s.as_ref(), 3, 8, &mut rng);
        let e = similar_variant(&f, s.as_ref(), &mut rng);
        if is_similar(&e, &f).is_err() {
            return Err(format!("generator produced a non-similar pair\n{e}\nvs\n{f}"));
        }
        if !member(s.as_ref(), &e) {
            return Err(format!("similar history rejected\n{e}\nsimilar to\n{f}"));
        }
    }
    Ok("200 histories with all prefixes accepted; 200 similar pairs accepted".into())
}

fn snapshot_self_test() -> Check {
    let started = Instant::now();
    let bad = (0..500u64).into_par_iter().find_map_any(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=4);
        let name = format!("snapshot:{n}");
        let s = spec(&name);
        let weights = (0..n).map(|_| rng.gen_range(1..=3)).collect();
        let mut sim = snapshot_object_sim(n, Engine::Algorithmic, Box::new(RandomOps::new(&name, seed)));
        sim.run(&Schedule::bursty(seed, weights, rng.gen_range(1..=6)), 40);
        let h = sim.log().history(Layer::Object).expect("well-formed log");
        (!member(s.as_ref(), &h)).then(|| format!("seed {seed}: snapshot history rejected\n{h}"))
    });
    if let Some(msg) = bad {
        return Err(msg);
    }
    within(Duration::from_secs(120), started)?;
    Ok("500 runs, 0 violations".into())
}

/// Every campaign of the suite: each catalog object with a correct and a
/// faulty inner implementation, both snapshot engines, both announce
/// representations and both verifier modes.
fn campaigns() -> Vec<FuzzConfig> {
    let mut out = Vec::new();
    for (i, name) in CATALOG.iter().enumerate() {
        for inner in ["correct", "flaky:0.2"] {
            for (j, (engine, bounded, mode)) in [
                (Engine::Algorithmic, false, Mode::Coupled),
                (Engine::Algorithmic, true, Mode::Monitor { verifiers: 1 }),
                (Engine::Atomic, false, Mode::Coupled),
            ]
            .into_iter()
            .enumerate()
            {
                let mut cfg = FuzzConfig::new(name, inner, 50, 1_000 * (i as u64 * 10 + j as u64 + 1));
                cfg.procs = 2 + (i + j) % 3;
                cfg.engine = engine;
                cfg.bounded = bounded;
                cfg.mode = mode;
                out.push(cfg);
            }
        }
    }
    let mut adversarial = FuzzConfig::new("queue", "buggy-thm1", 100, 77);
    adversarial.procs = 2;
    out.push(adversarial);
    out
}

fn run_campaign(cfg: &FuzzConfig) -> FuzzStats {
    let s = spec(&cfg.spec);
    (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let mut stats = FuzzStats::default();
            audit_run(&fuzz_run(cfg, i), &s, &mut stats);
            stats
        })
        .reduce(FuzzStats::default, |mut a, b| {
            a.merge(&b);
            a
        })
}

fn main() {
    let campaign_stats: std::sync::OnceLock<(FuzzStats, FuzzStats)> = std::sync::OnceLock::new();
    let all_campaigns = || {
        campaign_stats.get_or_init(|| {
            let mut total = FuzzStats::default();
            let mut correct_queue = FuzzStats::default();
            for cfg in campaigns() {
                let stats = run_campaign(&cfg);
                total.merge(&stats);
            }
            let cfg = FuzzConfig::new("queue", "correct", 1_000, 9_000);
            let stats = run_campaign(&cfg);
            correct_queue.merge(&stats);
            total.merge(&stats);
            (total, correct_queue)
        })
    };

    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);
    let criteria: Vec<Criterion<'_>> = vec![
        ("stack linearization examples", Box::new(linearization_examples)),
        ("checker agrees with brute-force oracle", Box::new(oracle_equivalence)),
        ("prefix and similarity closure", Box::new(closure_sampling)),
        ("read/write snapshot linearizes", Box::new(snapshot_self_test)),
        (
            "view properties on every fuzzed run",
            Box::new(|| {
                let (s, _) = all_campaigns();
                if s.runs < 1_000 || s.view_violations > 0 {
                    return Err(format!("{} runs, {} view violations", s.runs, s.view_violations));
                }
                Ok(format!("{} runs, 0 violations", s.runs))
            }),
        ),
        (
            "rebuilt history equals tight history",
            Box::new(|| {
                let (s, _) = all_campaigns();
                if s.sketch_violations > 0 {
                    return Err(format!("{} violations in {} runs", s.sketch_violations, s.runs));
                }
                Ok(format!("{} runs, 0 violations", s.runs))
            }),
        ),
        (
            "inner => tight => wrapped membership chain",
            Box::new(|| {
                let (s, _) = all_campaigns();
                if s.chain_violations > 0 {
                    return Err(format!("{} violations in {} runs", s.chain_violations, s.runs));
                }
                Ok(format!("{} runs over {} objects, 0 violations", s.runs, CATALOG.len()))
            }),
        ),
        (
            "no error verdict for a correct queue",
            Box::new(|| {
                let (_, q) = all_campaigns();
                if q.runs < 1_000 || q.error_verdicts > 0 {
                    return Err(format!("{} runs, {} error verdicts", q.runs, q.error_verdicts));
                }
                Ok(format!("{} runs, {} verdicts, 0 errors", q.runs, q.verdicts))
            }),
        ),
        (
            "every witness is rejected and round-trips",
            Box::new(|| {
                let (s, _) = all_campaigns();
                let adversarial = adversarial_verifier_run(scenario_by_name("adversarial-verifier").unwrap().schedule, 200);
                let checked = rvlin::scenarios::witnesses_valid(&adversarial, &lin_object(spec("queue")))?;
                if s.witness_violations > 0 {
                    return Err(format!("{} invalid witnesses", s.witness_violations));
                }
                Ok(format!(
                    "{} error verdicts in campaigns plus {checked} on the adversarial run, 0 invalid",
                    s.error_verdicts
                ))
            }),
        ),
        (
            "completeness and stability on the adversarial schedule",
            Box::new(|| {
                let schedule = scenario_by_name("adversarial-verifier").unwrap().schedule;
                let run = adversarial_verifier_run(schedule, 400);
                let first = completeness_and_stability(&run)?;
                if let Some(ok) = run.verdicts.iter().find(|v| v.step > first && !v.verdict.is_error()) {
                    return Err(format!("verdict at step {} is OK after the first error at {first}", ok.step));
                }
                let after = run.verdicts.iter().filter(|v| v.step > first).count();
                Ok(format!("first error at step {first}; {after} later verdicts, all errors"))
            }),
        ),
        (
            "indistinguishable executions",
            Box::new(|| {
                let r = impossibility_demo().map_err(|e| e.to_string())?;
                Ok(format!(
                    "{} decision functions with identical observations; E has a bad prefix of {} events; all F prefixes accepted",
                    r.decisions.len(),
                    r.e_bad_prefix.unwrap_or(0)
                ))
            }),
        ),
        ("bookkeeping steps and primitive audit", Box::new(efficiency)),
        ("crash tolerance", Box::new(crash_tolerance)),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({took:.2?})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail} ({took:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn efficiency() -> Check {
    let queue = spec("queue");
    let mut lines = Vec::new();
    for n in [2usize, 3, 4, 8] {
        let mut worst_op = 0;
        let mut worst_iter = 0;
        let mut ops = 0;
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weights = (0..n).map(|_| rng.gen_range(1..=4)).collect();
            let config = VerifyConfig {
                wrapper: WrapperConfig {
                    engine: Engine::Algorithmic,
                    bounded: seed % 2 == 1,
                },
                results_engine: Engine::Algorithmic,
                halt_on_error: false,
            };
            let run = run_verification(
                Mode::Coupled,
                n,
                config,
                Arc::new(lin_object(queue.clone())),
                Box::new(AtomicInner::new(queue.clone())),
                Box::new(RandomOps::new("queue", seed)),
                &Schedule::bursty(seed, weights, rng.gen_range(1..=8)),
                150 * n as u64,
            );
            let odd = non_register_steps(&run.log);
            if let Some(r) = odd.first() {
                return Err(format!("n={n}: step {} of {} is {:?}", r.step, r.process, r.action));
            }
            let (star, iterations) = op_costs(&run.log);
            ops += star.len();
            worst_op = worst_op.max(star.iter().map(|c| c.bookkeeping).max().unwrap_or(0));
            worst_iter = worst_iter.max(iterations.iter().map(|c| c.bookkeeping).max().unwrap_or(0));
        }
        let bound = STEP_FACTOR * n;
        lines.push(format!("n={n}: op {worst_op}, iteration {worst_iter} (bound {bound}, {ops} ops)"));
        if worst_op > bound || worst_iter > bound {
            return Err(lines.join("; "));
        }
    }
    Ok(format!("only reads and writes; {}", lines.join("; ")))
}

fn crash_tolerance() -> Check {
    let queue = spec("queue");
    let n = 4;
    let crash_at = 40;
    let mut schedule = Schedule::round_robin();
    for p in 2..=n {
        schedule = schedule.with_crash(ProcessId::new(p as u32), crash_at);
    }
    let config = VerifyConfig::default();
    let run = run_verification(
        Mode::Coupled,
        n,
        config,
        Arc::new(lin_object(queue.clone())),
        Box::new(AtomicInner::new(queue.clone())),
        Box::new(RandomOps::new("queue", 3)),
        &schedule,
        crash_at + 2_000,
    );
    // Steps of the survivor from each wrapped invocation to its verdict, after the crash.
    let p1 = ProcessId::new(1);
    let mut started = None;
    let mut spans = Vec::new();
    for r in run.log.of(p1) {
        match &r.action {
            Action::Invoke { layer: Layer::Star, .. } => started = Some(r.step),
            Action::Verdict { .. } => {
                if let Some(s) = started.take() {
                    if s >= crash_at {
                        spans.push(r.step - s + 1);
                    }
                }
            }
            _ => {}
        }
    }
    let bound = (STEP_FACTOR * n + 5) as u64;
    let worst = spans.iter().max().copied().unwrap_or(u64::MAX);
    if spans.len() < 20 || worst > bound {
        return Err(format!("survivor completed {} iterations, worst {worst} steps (bound {bound})", spans.len()));
    }

    let mut enforced = enforced_sim(
        n,
        WrapperConfig::default(),
        Engine::Algorithmic,
        Arc::new(lin_object(queue.clone())),
        Box::new(AtomicInner::new(queue.clone())),
        Box::new(RandomOps::new("queue", 4).with_limit(25)),
        false,
    );
    let mut schedule = Schedule::random(4);
    for p in 2..=n {
        schedule = schedule.with_crash(ProcessId::new(p as u32), crash_at);
    }
    let summary = enforced.run(&schedule, 100_000);
    if summary.stop != StopReason::Quiescent || !enforced.is_finished(p1) {
        return Err(format!("self-enforced survivor did not finish: {summary:?}"));
    }

    let clients = 3;
    let mut schedule = Schedule::random(5);
    for v in 1..=2 {
        schedule = schedule.with_crash(ProcessId::new((clients + v) as u32), 0);
    }
    let run = run_verification(
        Mode::Monitor { verifiers: 2 },
        clients,
        VerifyConfig::default(),
        Arc::new(lin_object(queue.clone())),
        Box::new(AtomicInner::new(queue)),
        Box::new(RandomOps::new("queue", 5).with_limit(10)),
        &schedule,
        100_000,
    );
    let star = run.log.history(Layer::Star).map_err(|e| e.to_string())?;
    let complete = star.operations().iter().filter(|o| o.is_complete()).count();
    if run.summary.stop != StopReason::Quiescent || complete != clients * 10 {
        return Err(format!("monitor clients completed {complete} of {} operations", clients * 10));
    }
    Ok(format!(
        "survivor ran {} iterations after the crash, worst {worst} steps (bound {bound}); \
         self-enforced survivor finished; monitor clients finished {complete} ops with verifiers crashed",
        spans.len()
    ))
}
