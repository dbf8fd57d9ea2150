use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rvlin::enforce::{enforced_sim, inner_by_name, InnerImpl, ScriptedInner, WrapperConfig};
use rvlin::format::{parse_trace, parse_tuples, write_trace, write_tuples};
use rvlin::membership::{is_linearizable, lin_object, GenLinObject};
use rvlin::scenarios::{figure_scenarios, fuzz_campaign, scenario_by_name, FuzzConfig};
use rvlin::sim::{Engine, Layer, RecordedExecution, Schedule, VerdictRecord};
use rvlin::spec::{by_name, SeqSpec};
use rvlin::verifier::{run_verification, Mode, Verdict, VerifyConfig};
use rvlin::views::{build_history, validate_views};
use rvlin::workload::RandomOps;

/// Runtime verification of linearizability on a deterministic
/// shared-memory simulator.
#[derive(Debug, Parser)]
#[command(name = "rvlin", version)]
struct Cli {
    /// Seed for schedules, workloads and faulty implementations.
    #[arg(long, global = true, env = "RVLIN_SEED", default_value_t = 0)]
    seed: u64,
    /// Step budget of simulated runs.
    #[arg(long, global = true, default_value_t = 400)]
    steps: u64,
    /// Number of client processes.
    #[arg(long, global = true, default_value_t = 3)]
    procs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide whether a trace is linearizable.
    Check {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Rebuild a trace from a tuple-set file.
    Xlambda {
        #[arg(long)]
        tuples: PathBuf,
    },
    /// Run the self-enforced object over an inner implementation.
    Enforce {
        #[command(flatten)]
        run: RunArgs,
        /// Stop a process after its first error response.
        #[arg(long)]
        halt: bool,
    },
    /// Run a verifier over an inner implementation.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Coupled)]
        mode: ModeArg,
        /// Client processes; defaults to --procs.
        #[arg(long)]
        clients: Option<usize>,
        /// Monitor processes in monitor mode.
        #[arg(long, default_value_t = 1)]
        verifiers: usize,
    },
    /// Canned scenarios.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
    /// Randomized verification campaign with invariant checks.
    Fuzz {
        #[arg(long, default_value = "queue")]
        spec: String,
        #[arg(long, default_value = "correct")]
        inner: String,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Coupled)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        verifiers: usize,
        #[arg(long, value_enum, default_value_t = EngineArg::Algorithmic)]
        engine: EngineArg,
        #[arg(long)]
        bounded: bool,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioAction {
    /// List scenario names.
    List,
    /// Run one scenario, or all of them with `all`.
    Run { name: String },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    spec: String,
    /// correct, buggy-thm1, flaky, flaky:<rate> or scripted:<file>.
    #[arg(long, default_value = "correct")]
    inner: String,
    /// A schedule file, or a number used as the seed of a random schedule.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, value_enum, default_value_t = EngineArg::Algorithmic)]
    engine: EngineArg,
    /// Keep announce sets as linked lists of immutable nodes.
    #[arg(long)]
    bounded: bool,
    /// Operations per process; unlimited by default.
    #[arg(long)]
    ops: Option<usize>,
    /// Directory for traces, the verdict log and witnesses.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Coupled,
    Monitor,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Atomic,
    Algorithmic,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Atomic => Engine::Atomic,
            EngineArg::Algorithmic => Engine::Algorithmic,
        }
    }
}

/// Failure that maps to exit code 2.
#[derive(Debug)]
struct UsageError(anyhow::Error);

fn usage(e: anyhow::Error) -> UsageError {
    UsageError(e)
}

type Outcome = Result<bool, UsageError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(UsageError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Check { spec, trace } => check(spec, trace),
        Command::Xlambda { tuples } => xlambda(tuples),
        Command::Enforce { run, halt } => enforce(cli, run, *halt),
        Command::Verify {
            run,
            mode,
            clients,
            verifiers,
        } => {
            let mode = match mode {
                ModeArg::Coupled => Mode::Coupled,
                ModeArg::Monitor => Mode::Monitor { verifiers: *verifiers },
            };
            verify(cli, run, mode, clients.unwrap_or(cli.procs))
        }
        Command::Scenario { action } => scenario(action),
        Command::Fuzz {
            spec,
            inner,
            runs,
            mode,
            verifiers,
            engine,
            bounded,
        } => {
            if inner_by_name(inner, &load_spec(spec)?, cli.seed).is_none() {
                return Err(usage(anyhow!("unknown inner implementation `{inner}`")));
            }
            let mut cfg = FuzzConfig::new(spec, inner, *runs, cli.seed);
            cfg.procs = cli.procs;
            cfg.steps = cli.steps;
            cfg.engine = (*engine).into();
            cfg.bounded = *bounded;
            cfg.mode = match mode {
                ModeArg::Coupled => Mode::Coupled,
                ModeArg::Monitor => Mode::Monitor { verifiers: *verifiers },
            };
            let stats = fuzz_campaign(&cfg);
            println!("{stats}");
            let unsound = inner == "correct" && stats.error_verdicts > 0;
            Ok(stats.invariant_violations() == 0 && !unsound)
        }
    }
}

fn read(path: &Path) -> Result<String, UsageError> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)
}

fn load_spec(name: &str) -> Result<Arc<dyn SeqSpec>, UsageError> {
    by_name(name).ok_or_else(|| usage(anyhow!("unknown spec `{name}`")))
}

fn load_inner(name: &str, spec: &Arc<dyn SeqSpec>, seed: u64) -> Result<Box<dyn InnerImpl>, UsageError> {
    if let Some(path) = name.strip_prefix("scripted:") {
        let text = read(Path::new(path))?;
        let inner = ScriptedInner::parse(&text).map_err(|(line, msg)| usage(anyhow!("{path}:{line}: {msg}")))?;
        return Ok(Box::new(inner));
    }
    inner_by_name(name, spec, seed).ok_or_else(|| usage(anyhow!("unknown inner implementation `{name}`")))
}

fn load_schedule(arg: Option<&str>, seed: u64) -> Result<Schedule, UsageError> {
    match arg {
        None => Ok(Schedule::random(seed)),
        Some(text) => match text.parse::<u64>() {
            Ok(s) => Ok(Schedule::random(s)),
            Err(_) => {
                let body = read(Path::new(text))?;
                Schedule::parse(&body).map_err(|e| usage(anyhow!("{text}:{e}")))
            }
        },
    }
}

fn check(spec: &str, trace: &Path) -> Outcome {
    let spec = load_spec(spec)?;
    let text = read(trace)?;
    let h = parse_trace(&text).map_err(|e| usage(anyhow!("{}:{e}", trace.display())))?;
    match is_linearizable(&h, spec.as_ref()) {
        Ok(lin) => {
            println!("LINEARIZABLE");
            println!("linearization: {lin}");
            for (uid, v) in &lin.completed_pending {
                println!("completed pending {uid} -> {v}");
            }
            Ok(true)
        }
        Err(_) => {
            println!("NOT LINEARIZABLE");
            Ok(false)
        }
    }
}

fn xlambda(path: &Path) -> Outcome {
    let text = read(path)?;
    let set = parse_tuples(&text).map_err(|e| usage(anyhow!("{}:{e}", path.display())))?;
    validate_views(&set).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
    let h = build_history(&set).map_err(|e| usage(anyhow!("{}: {e}", path.display())))?;
    print!("{}", write_trace(&h));
    Ok(true)
}

fn wrapper_config(run: &RunArgs) -> WrapperConfig {
    WrapperConfig {
        engine: run.engine.into(),
        bounded: run.bounded,
    }
}

fn ops(run: &RunArgs, seed: u64) -> Box<RandomOps> {
    let ops = RandomOps::new(&run.spec, seed);
    Box::new(match run.ops {
        Some(n) => ops.with_limit(n),
        None => ops,
    })
}

fn verdict_log(verdicts: &[VerdictRecord]) -> String {
    verdicts
        .iter()
        .map(|v| {
            let op = v.op.map_or_else(|| "-".to_string(), |u| u.to_string());
            let word = if v.verdict.is_error() { "ERROR" } else { "OK" };
            format!("step {} {} op {} {}\n", v.step, v.process, op, word)
        })
        .collect()
}

/// Writes traces, verdicts and witnesses when an output directory was given.
fn write_artifacts(out: Option<&Path>, log: &RecordedExecution, verdicts: &[VerdictRecord]) -> Result<(), UsageError> {
    let Some(dir) = out else { return Ok(()) };
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(usage)?;
    let write = |name: &str, body: String| {
        fs::write(dir.join(name), body)
            .with_context(|| format!("cannot write {}", dir.join(name).display()))
            .map_err(usage)
    };
    for (layer, name) in [(Layer::Inner, "inner.trace"), (Layer::Star, "star.trace"), (Layer::Enforced, "enforced.trace")] {
        let h = log.history(layer).map_err(|e| usage(anyhow!("{name}: {e}")))?;
        if !h.is_empty() {
            write(name, write_trace(&h))?;
        }
    }
    write("verdicts.log", verdict_log(verdicts))?;
    let mut seen = std::collections::BTreeSet::new();
    for v in verdicts {
        if let Verdict::Error { witness, tuples } = &v.verdict {
            let key = write_tuples(tuples);
            if seen.insert(key.clone()) {
                let k = seen.len();
                write(&format!("witness-{k}.trace"), write_trace(witness))?;
                write(&format!("witness-{k}.tuples"), key)?;
            }
        }
    }
    Ok(())
}

fn enforce(cli: &Cli, run: &RunArgs, halt: bool) -> Outcome {
    let spec = load_spec(&run.spec)?;
    let inner = load_inner(&run.inner, &spec, cli.seed)?;
    let schedule = load_schedule(run.schedule.as_deref(), cli.seed)?;
    let object: Arc<dyn GenLinObject> = Arc::new(lin_object(spec));
    let mut sim = enforced_sim(
        cli.procs,
        wrapper_config(run),
        run.engine.into(),
        object,
        inner,
        ops(run, cli.seed),
        halt,
    );
    let summary = sim.run(&schedule, cli.steps);
    let log = sim.into_log();
    let verdicts = log.verdicts();
    write_artifacts(run.out.as_deref(), &log, &verdicts)?;
    let enforced = log.history(Layer::Enforced).map_err(|e| usage(anyhow!("{e}")))?;
    let errors = enforced.operations().iter().filter(|o| o.value() == Some(&rvlin::Value::Error)).count();
    println!("operations: {} ({errors} returned error)", enforced.operations().len());
    match verdicts.iter().find(|v| v.verdict.is_error()) {
        Some(v) => {
            println!("RESULT: VIOLATION {}", v.step);
            Ok(false)
        }
        None => {
            println!("RESULT: SOUND (no violation within {} steps)", summary.steps);
            Ok(true)
        }
    }
}

fn verify(cli: &Cli, run: &RunArgs, mode: Mode, clients: usize) -> Outcome {
    let spec = load_spec(&run.spec)?;
    let inner = load_inner(&run.inner, &spec, cli.seed)?;
    let schedule = load_schedule(run.schedule.as_deref(), cli.seed)?;
    let config = VerifyConfig {
        wrapper: wrapper_config(run),
        results_engine: run.engine.into(),
        halt_on_error: false,
    };
    let result = run_verification(
        mode,
        clients,
        config,
        Arc::new(lin_object(spec)),
        inner,
        ops(run, cli.seed),
        &schedule,
        cli.steps,
    );
    write_artifacts(run.out.as_deref(), &result.log, &result.verdicts)?;
    if run.out.is_none() {
        print!("{}", verdict_log(&result.verdicts));
    }
    println!("{}", result.result_line());
    Ok(result.first_error().is_none())
}

fn scenario(action: &ScenarioAction) -> Outcome {
    match action {
        ScenarioAction::List => {
            for s in figure_scenarios() {
                println!("{:<28} {}", s.name, s.summary);
            }
            Ok(true)
        }
        ScenarioAction::Run { name } => {
            let chosen = if name == "all" {
                figure_scenarios()
            } else {
                vec![scenario_by_name(name).ok_or_else(|| usage(anyhow!("unknown scenario `{name}`")))?]
            };
            let mut ok = true;
            for s in chosen {
                match s.run() {
                    Ok(report) => print!("{report}"),
                    Err(e) => {
                        println!("== {}\nFAILED: {e}", s.name);
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
    }
}
